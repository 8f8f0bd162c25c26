import math
import unittest

import numpy as np
from pydantic import ValidationError

from src.main.analysis import (ChainRunConfig, copula_path_equivalence, covariance_equivalence_transform,
                               diagnose_conditions, exp_moment_check, isotropy_positivity_check, run_delta_chain,
                               selected_density_normalization, selected_step_goodness_of_fit, simulate_chains,
                               split_half_consistency, summarize_chains, verify_covariance_equivalence)
from src.main.archimedean import archimedean_copula
from src.main.dist import copula_marginal_distribution, gaussian_step_distribution, isotropic_student_t_distribution
from src.main.generators.gumbel import Gumbel
from src.main.generators.product import Product
from src.main.marginals import STANDARD_NORMAL, make_marginal
from src.main.problem import Problem, RotationFrame


def gaussian_setting(lam=5, theta=math.pi / 4, sigma=1.0):
    problem = Problem(n=2, lam=lam, theta=theta, sigma=sigma)
    return problem, gaussian_step_distribution(2, frame=problem.frame)


class TestChainRunConfig(unittest.TestCase):

    def test_01_defaults(self):
        """Test the default chain run settings."""
        config = ChainRunConfig()
        self.assertEqual((config.burn_in, config.steps, config.replicas, config.seed), (10_000, 100_000, 1, 0))

    def test_02_validation(self):
        """Test that out-of-range run settings are rejected."""
        for kwargs in ({"steps": 100, "burn_in": 100},
                       {"seed": -1},
                       {"seed": 2**64},
                       {"replicas": 0},
                       {"thinning": 0},
                       {"unknown": 1}):
            with self.subTest(kwargs=kwargs):
                with self.assertRaises(ValidationError):
                    ChainRunConfig(**kwargs)


class TestDeltaChain(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.problem, cls.dist = gaussian_setting()
        cls.config = ChainRunConfig(burn_in=2000, steps=20000, seed=7)
        cls.traces = simulate_chains(cls.problem, cls.dist, cls.config)
        cls.report = summarize_chains(cls.problem, cls.dist, cls.config, cls.traces)

    def test_01_positive_divergence_rate(self):
        """Test that the Gaussian chain diverges at a positive rate."""
        rate = self.report.divergence_rate
        self.assertGreater(rate.lower, 0.0)
        self.assertTrue(rate.contains(rate.estimate))
        self.assertEqual(rate.block_length, math.ceil(math.sqrt(18000)))

    def test_02_stationarity_residual_telescopes(self):
        """Test that the stationarity residual equals the net change of δ per step."""
        trace = self.traces[0]
        residual = self.report.stationarity_identity_residual
        burn = self.config.burn_in
        steps_used = self.config.steps - burn
        self.assertAlmostEqual(residual.estimate * steps_used, trace.delta[burn] - trace.final_state.delta,
                               delta=1e-8)
        self.assertTrue(residual.contains(0.0))

    def test_03_trace_is_consistent(self):
        """Test the shapes and the recurrence of a recorded trace."""
        trace = self.traces[0]
        self.assertEqual(trace.delta.shape, (20000,))
        self.assertEqual(trace.mstar.shape, (20000, 2))
        self.assertEqual(trace.delta[0], 1.0)
        self.assertTrue(np.all(trace.delta >= 0.0))
        np.testing.assert_array_equal(trace.delta[1:], trace.delta[:-1] - trace.g_values[:-1])
        self.assertEqual(self.report.resample_stats.total, int(trace.resamples.sum()))
        self.assertTrue(self.report.mean_mstar_2.upper < 0.0)

    def test_04_stationary_delta_summary(self):
        """Test that the stationary δ quantiles are ordered."""
        summary = self.report.stationary_delta
        quantiles = [summary.quantiles[key] for key in ("0.05", "0.25", "0.5", "0.75", "0.95")]
        self.assertEqual(quantiles, sorted(quantiles))
        self.assertGreater(summary.mean, 0.0)
        self.assertGreater(summary.variance, 0.0)

    def test_05_split_halves_agree(self):
        """Test that both halves of the run give overlapping rate intervals."""
        split = split_half_consistency(self.traces, self.problem, self.config)
        self.assertTrue(split.overlap)
        self.assertEqual(split, self.report.split_half)

    def test_06_report_is_reproducible(self):
        """Test that the same seed reproduces the report exactly."""
        again = run_delta_chain(self.problem, self.dist, self.config)
        self.assertEqual(again.model_dump(mode='json'), self.report.model_dump(mode='json'))

    def test_07_step_size_scales_the_rate_only(self):
        """Test that σ scales the rate and leaves the δ chain unchanged."""
        problem, dist = gaussian_setting(sigma=7.0)
        config = ChainRunConfig(burn_in=200, steps=3000, seed=3)
        problem_unit, dist_unit = gaussian_setting(sigma=1.0)
        scaled = simulate_chains(problem, dist, config)
        unit = simulate_chains(problem_unit, dist_unit, config)
        np.testing.assert_array_equal(scaled[0].delta, unit[0].delta)
        rate_scaled = summarize_chains(problem, dist, config, scaled).divergence_rate
        rate_unit = summarize_chains(problem_unit, dist_unit, config, unit).divergence_rate
        self.assertAlmostEqual(rate_scaled.estimate, 7.0 * rate_unit.estimate, delta=1e-12 * abs(rate_scaled.estimate))
        self.assertAlmostEqual(rate_scaled.lower, 7.0 * rate_unit.lower, delta=1e-12 * abs(rate_scaled.lower))

    def test_08_workers_do_not_change_results(self):
        """Test that running replicas in threads gives the sequential results."""
        problem, dist = gaussian_setting(lam=3)
        sequential = ChainRunConfig(burn_in=100, steps=1500, replicas=3, seed=11)
        threaded = sequential.model_copy(update={"workers": 3})
        a = run_delta_chain(problem, dist, sequential)
        b = run_delta_chain(problem, dist, threaded)
        self.assertEqual(a.divergence_rate, b.divergence_rate)
        self.assertEqual(a.stationary_delta, b.stationary_delta)

    def test_09_replicas_are_independent(self):
        """Test that replicas draw from distinct streams."""
        problem, dist = gaussian_setting(lam=3)
        traces = simulate_chains(problem, dist, ChainRunConfig(burn_in=10, steps=200, replicas=2, seed=1))
        self.assertEqual([t.replica for t in traces], [0, 1])
        self.assertFalse(np.array_equal(traces[0].delta, traces[1].delta))

    def test_10_stationarity_residual_for_a_gumbel_copula(self):
        """Test the stationarity identity for a Gumbel copula step law."""
        problem = Problem(n=2, lam=5, theta=math.pi / 4)
        dist = copula_marginal_distribution(archimedean_copula(Gumbel(2.0)), STANDARD_NORMAL, STANDARD_NORMAL, None,
                                            problem.frame)
        report = run_delta_chain(problem, dist, ChainRunConfig(burn_in=500, steps=5000, seed=13))
        self.assertTrue(report.stationarity_identity_residual.contains(0.0))


class TestConditionDiagnostics(unittest.TestCase):

    def test_01_gaussian_conditions_hold(self):
        """Test that a Gaussian law raises no condition flag."""
        problem, dist = gaussian_setting(lam=2)
        table = diagnose_conditions(problem, dist, [1.0, 5.0, 20.0], 20000, np.random.default_rng(101))
        self.assertEqual(len(table.rows), 3)
        self.assertAlmostEqual(table.analytic_limit, math.cos(math.pi / 4) / math.sqrt(math.pi), delta=1e-12)
        self.assertAlmostEqual(table.analytic_limit, 0.39894, delta=1e-5)
        self.assertLessEqual(abs(table.limit_z_score), 4.0)
        self.assertFalse(table.exp_moment.divergent)
        self.assertEqual([check.delta for check in table.abs_moments], [1.0, 5.0, 20.0])
        self.assertFalse(any(check.divergent for check in table.abs_moments))
        self.assertEqual(table.flags, [])
        self.assertFalse(table.any_flag)
        self.assertLess(table.rows[0].mean_g_selected, table.rows[2].mean_g_selected)

    def test_02_heavy_tailed_constraint_coordinate_is_flagged(self):
        """Test that a Cauchy constraint coordinate raises the moment flags."""
        problem = Problem(n=2, lam=5, theta=math.pi / 4)
        dist = copula_marginal_distribution(archimedean_copula(Product(1.0)), make_marginal("cauchy"),
                                            STANDARD_NORMAL, None, problem.frame)
        table = diagnose_conditions(problem, dist, [1.0, 2.0], 500, np.random.default_rng(102))
        self.assertTrue(table.exp_moment.divergent)
        self.assertIn("exp_moment_divergent", table.flags)
        self.assertTrue(all(check.divergent for check in table.abs_moments))
        self.assertIn("abs_moment_not_finite", table.flags)
        self.assertIsNone(table.analytic_limit)

    def test_03_exp_moment_of_gaussian(self):
        """Test the exponential moment running mean against exp(1/2)."""
        _, dist = gaussian_setting()
        check = exp_moment_check(dist, np.random.default_rng(103), base=1024, doublings=8)
        self.assertEqual(check.sample_sizes[0], 1024)
        self.assertEqual(check.sample_sizes[-1], 1024 * 2**8)
        self.assertAlmostEqual(check.running_means[-1], math.exp(0.5), delta=0.05)

    def test_04_invalid_grid(self):
        """Test that decreasing or negative δ grids are rejected."""
        problem, dist = gaussian_setting()
        with self.assertRaises(ValueError):
            diagnose_conditions(problem, dist, [2.0, 1.0], 200, np.random.default_rng(0))
        with self.assertRaises(ValueError):
            diagnose_conditions(problem, dist, [-1.0, 1.0], 200, np.random.default_rng(0))


class TestCovarianceEquivalence(unittest.TestCase):

    def test_01_diagonal_covariance(self):
        """Test the transform of a diagonal covariance."""
        theta = math.pi / 4
        x0 = np.array([-1.0, -1.0])
        transform = covariance_equivalence_transform(None, np.diag([4.0, 1.0]), theta, x0)
        self.assertAlmostEqual(transform.theta_prime, 0.4636476, delta=1e-7)
        self.assertNotAlmostEqual(transform.theta_prime, 1.1071487, places=3)
        np.testing.assert_allclose(transform.scaling, [0.5, 1.0], atol=1e-12)
        np.testing.assert_allclose(transform.x0_prime, [-0.5, -1.0], atol=1e-12)
        np.testing.assert_allclose(transform.transformed_covariance, np.eye(2), atol=1e-12)

    def test_02_identity_is_unchanged(self):
        """Test that the identity covariance leaves the angle unchanged."""
        transform = covariance_equivalence_transform(None, np.eye(3), 0.3, np.zeros(3))
        self.assertAlmostEqual(transform.theta_prime, 0.3, delta=1e-12)
        np.testing.assert_allclose(transform.scaling, np.ones(3), atol=1e-12)

    def test_03_correlated_covariance(self):
        """Test the transform of a correlated covariance."""
        covariance = np.array([[2.0, 0.5], [0.5, 1.0]])
        transform = covariance_equivalence_transform(None, covariance, 0.6, np.zeros(2))
        beta = np.sqrt(np.diag(np.linalg.inv(covariance)))
        np.testing.assert_allclose(transform.scaling, beta, rtol=1e-12)
        np.testing.assert_allclose(np.diag(transform.transformed_covariance), beta**2 * np.diag(covariance),
                                   rtol=1e-12)
        expected = math.atan2(math.sin(0.6) / beta[1], math.cos(0.6) / beta[0])
        self.assertAlmostEqual(transform.theta_prime, expected, delta=1e-12)

    def test_04_validation(self):
        """Test that invalid covariances and mismatched laws are rejected."""
        with self.assertRaises(ValueError):
            covariance_equivalence_transform(None, [[1.0, 2.0], [2.0, 1.0]], 0.5, np.zeros(2))
        with self.assertRaises(ValueError):
            covariance_equivalence_transform(None, [[1.0, 0.1], [0.0, 1.0]], 0.5, np.zeros(2))
        with self.assertRaises(ValueError):
            covariance_equivalence_transform(gaussian_step_distribution(3), np.eye(2), 0.5, np.zeros(2))

    def test_05_rescaled_es_matches_original(self):
        """Test that the rescaled ES reproduces the scaled positions."""
        theta = math.pi / 4
        covariance = np.diag([4.0, 1.0])
        dist = gaussian_step_distribution(2, covariance, RotationFrame(theta, 2))
        report = verify_covariance_equivalence(dist, covariance, theta, 1000, np.random.default_rng(111),
                                               replicas=200, checkpoints=(10, 100, 1000))
        self.assertTrue(report.passed)
        self.assertEqual(len(report.comparisons), 6)
        self.assertAlmostEqual(report.theta_used, 0.4636476, delta=1e-7)

    def test_06_wrong_angle_is_detected(self):
        """Test that keeping the original angle fails the late comparisons."""
        theta = math.pi / 4
        covariance = np.diag([4.0, 1.0])
        dist = gaussian_step_distribution(2, covariance, RotationFrame(theta, 2))
        report = verify_covariance_equivalence(dist, covariance, theta, 1000, np.random.default_rng(112),
                                               replicas=200, checkpoints=(10, 100, 1000), theta_prime_override=theta)
        self.assertFalse(report.passed)
        self.assertEqual(report.theta_used, theta)
        late = [c for c in report.comparisons if c.label.startswith("t=1000 ")]
        self.assertEqual(len(late), 2)
        self.assertFalse(any(c.passed for c in late))

    def test_07_only_gaussian_laws(self):
        """Test that non-Gaussian laws are refused."""
        problem = Problem(n=2, lam=5, theta=0.5)
        copula = copula_marginal_distribution(archimedean_copula(Product(1.0)), STANDARD_NORMAL, STANDARD_NORMAL,
                                              None, problem.frame)
        with self.assertRaises(ValueError):
            verify_covariance_equivalence(copula, np.eye(2), 0.5, 100, np.random.default_rng(0))


class TestIsotropy(unittest.TestCase):

    def test_01_gaussian_has_negative_drift_and_positive_rate(self):
        """Test the isotropy check on the standard normal law."""
        problem, dist = gaussian_setting()
        config = ChainRunConfig(burn_in=1000, steps=10000, seed=5)
        report = isotropy_positivity_check(dist, problem, config, delta_grid=(0.25, 0.5, 1.0), samples=50000)
        self.assertTrue(report.declared)
        self.assertTrue(report.all_negative)
        self.assertTrue(report.rate_positive)
        self.assertEqual(len(report.conditional_mstar_2), 3)

    def test_02_undeclared_law_is_not_checked(self):
        """Test that a law without declared isotropy is reported, not simulated."""
        problem = Problem(n=2, lam=5, theta=math.pi / 4)
        dist = copula_marginal_distribution(archimedean_copula(Gumbel(2.0)), STANDARD_NORMAL, STANDARD_NORMAL, None,
                                            problem.frame)
        report = isotropy_positivity_check(dist, problem, ChainRunConfig(burn_in=10, steps=100))
        self.assertFalse(report.declared)
        self.assertEqual(report.note, "hypothesis not declared")
        self.assertIsNone(report.divergence_rate)

    def test_03_student_t_law_at_a_steep_angle(self):
        """Test the isotropy check on a Student t law with θ = π/3."""
        problem = Problem(n=2, lam=3, theta=math.pi / 3)
        dist = isotropic_student_t_distribution(2, 3.0, problem.frame)
        config = ChainRunConfig(burn_in=1000, steps=10000, seed=17)
        report = isotropy_positivity_check(dist, problem, config, delta_grid=(0.25, 0.5, 1.0), samples=50000)
        self.assertTrue(report.declared)
        self.assertTrue(report.all_negative)
        self.assertTrue(report.rate_positive)


class TestSelectedStepLaw(unittest.TestCase):

    def test_01_goodness_of_fit_against_exact_density(self):
        """Test selected Gaussian steps against their exact density."""
        rng = np.random.default_rng(121)
        for lam in (2, 5):
            problem, dist = gaussian_setting(lam=lam)
            for delta in (0.1, 1.0, 3.0):
                with self.subTest(lam=lam, delta=delta):
                    result = selected_step_goodness_of_fit(problem, dist, delta, 20000, rng)
                    self.assertGreater(result.pvalue, 1e-4)
                    self.assertGreater(result.categories, 10)

    def test_02_goodness_of_fit_for_a_copula_law(self):
        """Test selected Gumbel copula steps against their exact density."""
        problem = Problem(n=2, lam=3, theta=0.9)
        dist = copula_marginal_distribution(archimedean_copula(Gumbel(2.0)), STANDARD_NORMAL, STANDARD_NORMAL, None,
                                            problem.frame)
        result = selected_step_goodness_of_fit(problem, dist, 1.0, 20000, np.random.default_rng(122))
        self.assertGreater(result.pvalue, 1e-4)

    def test_03_goodness_of_fit_needs_two_dimensions(self):
        """Test that the goodness of fit refuses n != 2."""
        problem = Problem(n=3, lam=3, theta=0.9)
        dist = gaussian_step_distribution(3, frame=problem.frame)
        with self.assertRaises(ValueError):
            selected_step_goodness_of_fit(problem, dist, 1.0, 1000, np.random.default_rng(0))

    def test_04_density_normalisation(self):
        """Test that the selected step density integrates to one."""
        problem, dist = gaussian_setting(lam=3)
        self.assertAlmostEqual(selected_density_normalization(problem, dist, 0.5), 1.0, delta=1e-5)

    def test_05_copula_path_agrees_with_resampling(self):
        """Test that copula sampling matches resampling."""
        problem, dist = gaussian_setting(lam=5)
        report = copula_path_equivalence(problem, dist, 1.0, 5000, np.random.default_rng(131), alpha=1e-4)
        self.assertTrue(report.passed)
        self.assertEqual(len(report.feasible) + len(report.selected), 4)

    def test_06_copula_path_refuses_dependent_frame_coordinates(self):
        """Test that copula sampling refuses dependent frame coordinates."""
        problem = Problem(n=2, lam=5, theta=math.pi / 4)
        dist = copula_marginal_distribution(archimedean_copula(Gumbel(2.0)), STANDARD_NORMAL, STANDARD_NORMAL, None,
                                            problem.frame)
        with self.assertRaises(ValueError):
            copula_path_equivalence(problem, dist, 1.0, 100, np.random.default_rng(0))


if __name__ == '__main__':
    unittest.main()
