import unittest

import numpy as np

from src.main.bootstrap import ConfidenceInterval, default_block_length, moving_block_bootstrap_mean


def ar1(rng, phi, length):
    noise = rng.standard_normal(length)
    series = np.empty(length)
    series[0] = noise[0] / np.sqrt(1.0 - phi**2)
    for t in range(1, length):
        series[t] = phi * series[t - 1] + noise[t]
    return series


class TestMovingBlockBootstrap(unittest.TestCase):

    def test_01_default_block_length(self):
        """Test the default block length ceil(sqrt(T))."""
        self.assertEqual(default_block_length(1), 1)
        self.assertEqual(default_block_length(100), 10)
        self.assertEqual(default_block_length(100000), 317)

    def test_02_iid_interval_width(self):
        """Test the interval width for an i.i.d. normal series."""
        series = np.random.default_rng(1).standard_normal(10000)
        interval = moving_block_bootstrap_mean(series, np.random.default_rng(2))
        self.assertEqual(interval.block_length, 100)
        self.assertAlmostEqual(interval.estimate, float(series.mean()), delta=1e-15)
        self.assertTrue(interval.contains(interval.estimate))
        self.assertGreater(interval.upper - interval.lower, 0.025)
        self.assertLess(interval.upper - interval.lower, 0.06)

    def test_03_blocks_widen_interval_for_autocorrelated_series(self):
        """Test that blocks widen the interval of an AR(1) series."""
        series = ar1(np.random.default_rng(3), 0.9, 10000)
        blocked = moving_block_bootstrap_mean(series, np.random.default_rng(4))
        naive = moving_block_bootstrap_mean(series, np.random.default_rng(4), block_length=1)
        self.assertGreater(blocked.upper - blocked.lower, 2.5 * (naive.upper - naive.lower))

    def test_04_pooled_replicas(self):
        """Test pooling replicas of different lengths."""
        rng = np.random.default_rng(5)
        series = [rng.standard_normal(400) + 1.0, rng.standard_normal(900) + 1.0]
        interval = moving_block_bootstrap_mean(series, np.random.default_rng(6), resamples=500)
        self.assertAlmostEqual(interval.estimate, float(np.concatenate(series).mean()), delta=1e-14)
        self.assertEqual(interval.block_length, 20)
        self.assertEqual(interval.resamples, 500)
        self.assertTrue(interval.excludes_zero())

    def test_05_deterministic_for_a_seed(self):
        """Test that the same generator seed gives the same interval."""
        series = np.random.default_rng(7).standard_normal(5000)
        a = moving_block_bootstrap_mean(series, np.random.default_rng(8))
        b = moving_block_bootstrap_mean(series, np.random.default_rng(8))
        self.assertEqual(a, b)

    def test_06_validation(self):
        """Test that empty series and invalid settings are rejected."""
        rng = np.random.default_rng(9)
        with self.assertRaises(ValueError):
            moving_block_bootstrap_mean([], rng)
        with self.assertRaises(ValueError):
            moving_block_bootstrap_mean(np.empty(0), rng)
        with self.assertRaises(ValueError):
            moving_block_bootstrap_mean(np.ones(10), rng, block_length=11)
        with self.assertRaises(ValueError):
            moving_block_bootstrap_mean(np.ones(10), rng, block_length=0)
        with self.assertRaises(ValueError):
            moving_block_bootstrap_mean(np.ones(10), rng, confidence=1.0)

    def test_07_constant_series(self):
        """Test that a constant series gives a degenerate interval."""
        interval = moving_block_bootstrap_mean(np.full(100, 2.5), np.random.default_rng(10))
        self.assertEqual((interval.lower, interval.estimate, interval.upper), (2.5, 2.5, 2.5))


class TestConfidenceInterval(unittest.TestCase):

    def test_01_helpers(self):
        """Test contains, excludes_zero and overlaps."""
        interval = ConfidenceInterval(estimate=1.0, lower=0.5, upper=1.5)
        self.assertTrue(interval.contains(1.5))
        self.assertFalse(interval.contains(1.6))
        self.assertTrue(interval.excludes_zero())
        self.assertFalse(ConfidenceInterval(estimate=0.1, lower=-0.1, upper=0.3).excludes_zero())
        self.assertTrue(interval.overlaps(ConfidenceInterval(estimate=2.0, lower=1.4, upper=2.5)))
        self.assertFalse(interval.overlaps(ConfidenceInterval(estimate=2.0, lower=1.6, upper=2.5)))

    def test_02_scaled(self):
        """Test scaling an interval by a positive factor."""
        scaled = ConfidenceInterval(estimate=1.0, lower=0.5, upper=1.5, block_length=7).scaled(7.0)
        self.assertEqual((scaled.estimate, scaled.lower, scaled.upper), (7.0, 3.5, 10.5))
        self.assertEqual(scaled.block_length, 7)

    def test_03_json_round_trip(self):
        """Test that an interval survives a JSON dump."""
        interval = ConfidenceInterval(estimate=1.0, lower=0.5, upper=1.5)
        self.assertEqual(ConfidenceInterval.model_validate(interval.model_dump(mode='json')), interval)


if __name__ == '__main__':
    unittest.main()
