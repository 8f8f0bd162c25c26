import math
import unittest

import numpy as np
from pydantic import ValidationError

from src.main.commons import DimensionMismatchError
from src.main.problem import (Problem, RotationFrame, constraint, objective, rotate_from_constraint_frame,
                              rotate_to_constraint_frame)


class TestObjectiveAndConstraint(unittest.TestCase):

    def test_01_objective_is_first_coordinate(self):
        """Test that f(x) is the first coordinate of x."""
        self.assertEqual(objective([3.0, -1.0]), 3.0)
        self.assertEqual(objective(np.zeros(4)), 0.0)
        self.assertEqual(objective([-2.5, 7.0, 1.0]), -2.5)

    def test_02_objective_dimension_mismatch(self):
        """Test that f refuses vectors of the wrong length."""
        with self.assertRaises(DimensionMismatchError):
            objective([1.0, 2.0, 3.0], n=2)
        with self.assertRaises(DimensionMismatchError):
            objective([1.0])

    def test_03_constraint_values(self):
        """Test g(x) at a few points."""
        self.assertAlmostEqual(constraint([1.0, 0.0], math.pi / 4), 0.70711, places=5)
        self.assertEqual(constraint([0.0, 0.0], 0.3), 0.0)
        self.assertAlmostEqual(constraint([-1.0, -1.0], math.pi / 3), -1.36603, places=5)

    def test_04_constraint_dimension_mismatch(self):
        """Test that g refuses vectors of the wrong length."""
        with self.assertRaises(DimensionMismatchError):
            constraint([1.0, 2.0], 0.5, n=3)

    def test_05_feasibility_invariant_under_positive_scaling(self):
        """Test that feasibility does not change under positive scaling."""
        rng = np.random.default_rng(1)
        for x in rng.normal(size=(200, 3)):
            g = constraint(x, 0.4)
            self.assertEqual(constraint(2.0 * x, 0.4) <= 0.0, g <= 0.0)


class TestRotationFrame(unittest.TestCase):

    def test_01_orthogonality_and_columns(self):
        """Test that the frame is orthogonal with the expected first columns."""
        for theta in (0.1, math.pi / 4, 1.2):
            frame = RotationFrame(theta, 4)
            np.testing.assert_allclose(frame.forward @ frame.inverse, np.eye(4), atol=1e-12)
            np.testing.assert_allclose(frame.forward[:, 0], [math.cos(theta), math.sin(theta), 0, 0], atol=1e-15)
            np.testing.assert_allclose(frame.forward[:, 1], [-math.sin(theta), math.cos(theta), 0, 0], atol=1e-15)

    def test_02_basis_images(self):
        """Test that ∇g and its normal map to the first two basis vectors."""
        problem = Problem(n=3, lam=5, theta=math.pi / 4)
        frame = problem.frame
        np.testing.assert_allclose(rotate_to_constraint_frame(problem.grad_g, frame), [1.0, 0.0, 0.0], atol=1e-15)
        grad_perp = frame.forward[:, 1]
        np.testing.assert_allclose(rotate_to_constraint_frame(grad_perp, frame), [0.0, 1.0, 0.0], atol=1e-15)

    def test_03_round_trip(self):
        """Test rotating into the frame and back."""
        frame = RotationFrame(0.9, 3)
        x = np.array([0.3, -0.7, 1.1])
        back = rotate_from_constraint_frame(rotate_to_constraint_frame(x, frame), frame)
        np.testing.assert_allclose(back, x, atol=1e-12)

    def test_04_first_frame_coordinate_is_constraint(self):
        """Test that the first frame coordinate equals g(x)."""
        theta = 1.1
        frame = RotationFrame(theta, 5)
        rng = np.random.default_rng(2)
        for x in rng.normal(scale=10.0, size=(100, 5)):
            self.assertAlmostEqual(rotate_to_constraint_frame(x, frame)[0], constraint(x, theta), delta=1e-12)

    def test_05_vectorised_constraint_values(self):
        """Test g on a batch of points."""
        frame = RotationFrame(0.5, 2)
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(frame.constraint_values(x), [math.cos(0.5), math.sin(0.5)])

    def test_06_matrix_is_read_only(self):
        """Test that the frame matrix cannot be modified."""
        frame = RotationFrame(0.5, 2)
        with self.assertRaises(ValueError):
            frame.forward[0, 0] = 2.0

    def test_07_dimension_mismatch(self):
        """Test that the frame refuses vectors of the wrong length."""
        with self.assertRaises(DimensionMismatchError):
            RotationFrame(0.5, 3).to_frame(np.zeros(2))


class TestProblem(unittest.TestCase):

    def test_01_valid_problem(self):
        """Test building a valid problem."""
        problem = Problem(n=2, lam=5, theta=math.pi / 4, sigma=2.0)
        self.assertEqual(problem.frame.theta, math.pi / 4)
        self.assertEqual(problem.sigma, 2.0)

    def test_02_rejects_invalid_fields(self):
        """Test that invalid n, λ, θ and σ are rejected."""
        for kwargs in ({"n": 1, "lam": 5, "theta": 0.5},
                       {"n": 2, "lam": 1, "theta": 0.5},
                       {"n": 2, "lam": 5, "theta": 0.0},
                       {"n": 2, "lam": 5, "theta": math.pi / 2},
                       {"n": 2, "lam": 5, "theta": 1.5707963},
                       {"n": 2, "lam": 5, "theta": float("nan")},
                       {"n": 2, "lam": 5, "theta": 0.5, "sigma": 0.0}):
            with self.subTest(kwargs=kwargs):
                with self.assertRaises(ValidationError):
                    Problem(**kwargs)

    def test_03_start_point_distance(self):
        """Test that the start point is at the requested distance."""
        problem = Problem(n=3, lam=4, theta=0.7, sigma=3.0)
        x0 = problem.start_point(1.5)
        self.assertAlmostEqual(-constraint(x0, 0.7) / problem.sigma, 1.5, delta=1e-12)
        self.assertTrue(problem.is_feasible(x0))
        with self.assertRaises(ValueError):
            problem.start_point(-1.0)

    def test_04_problem_is_immutable(self):
        """Test that a problem cannot be modified after creation."""
        problem = Problem(n=2, lam=5, theta=0.5)
        with self.assertRaises(ValidationError):
            problem.lam = 3

    def test_05_serialisation_round_trip(self):
        """Test that a problem survives a JSON dump."""
        problem = Problem(n=2, lam=5, theta=0.5, sigma=1.5)
        again = Problem.model_validate(problem.model_dump(mode='json'))
        self.assertEqual(again.model_dump(), problem.model_dump())
        self.assertEqual(again.frame.theta, 0.5)


if __name__ == '__main__':
    unittest.main()
