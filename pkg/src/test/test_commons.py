import os
import shutil
import unittest

import numpy as np
import scipy.stats

from src.main.commons import (ConfigError, DimensionMismatchError, QuadratureError, ResampleCapError, as_vector,
                              bisect_increasing, bisect_quantile, clamp_unit, make_rng, read_str)


class TestCommons(unittest.TestCase):

    def setUp(self):
        self.test_dir = os.path.join(os.path.dirname(__file__), "test_commons_temp")
        os.makedirs(self.test_dir, exist_ok=True)

    def tearDown(self):
        if os.path.exists(self.test_dir):
            shutil.rmtree(self.test_dir)

    def test_01_read_str(self):
        """Test reading a UTF-8 text file."""
        path = os.path.join(self.test_dir, "a.txt")
        with open(path, 'w', encoding='utf-8') as f:
            f.write("δ = 1\n")
        self.assertEqual(read_str(path), "δ = 1\n")

    def test_02_make_rng_reproducible_and_independent(self):
        """Test that stream keys give reproducible, distinct generators."""
        a = make_rng(42, 0, 1).random(5)
        b = make_rng(42, 0, 1).random(5)
        c = make_rng(42, 0, 2).random(5)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))
        with self.assertRaises(ValueError):
            make_rng(-1)
        with self.assertRaises(ValueError):
            make_rng(2**64)

    def test_03_as_vector(self):
        """Test vector coercion and its dimension checks."""
        np.testing.assert_array_equal(as_vector([1, 2], 2), [1.0, 2.0])
        with self.assertRaises(DimensionMismatchError):
            as_vector([1, 2, 3], 2)
        with self.assertRaises(ValueError):
            as_vector([[1, 2]], 2)

    def test_04_clamp_unit(self):
        """Test clamping to the open unit interval."""
        np.testing.assert_array_equal(clamp_unit(np.array([0.0, 0.5, 1.0])), [1e-12, 0.5, 1.0 - 1e-12])

    def test_05_bisect_increasing_vectorised(self):
        """Test vectorised bisection on x^3."""
        targets = np.array([-8.0, 0.0, 1.0, 27.0])
        roots = bisect_increasing(lambda x: x**3, targets, -10.0, 10.0)
        np.testing.assert_allclose(roots, np.cbrt(targets), atol=1e-9)

    def test_06_bisect_quantile(self):
        """Test quantiles by bisection, including a far Cauchy tail."""
        u = np.array([0.025, 0.5, 0.975])
        np.testing.assert_allclose(bisect_quantile(scipy.stats.norm.cdf, u), [-1.959964, 0.0, 1.959964], atol=1e-6)
        cauchy = bisect_quantile(scipy.stats.cauchy.cdf, np.array([1e-9]))
        self.assertLess(abs(float(cauchy[0]) / float(scipy.stats.cauchy.ppf(1e-9)) - 1.0), 1e-5)

    def test_07_exceptions_carry_details(self):
        """Test the details carried by the package exceptions."""
        error = ConfigError(["first", "second"])
        self.assertEqual(error.errors, ["first", "second"])
        self.assertIn("second", str(error))
        self.assertIsInstance(error, ValueError)
        cap = ResampleCapError(1000000, 0.5)
        self.assertEqual(cap.attempts, 1000000)
        self.assertIn("0.5", str(cap))
        quad = QuadratureError("did not converge", 1e-5)
        self.assertEqual(quad.achieved_tolerance, 1e-5)


if __name__ == '__main__':
    unittest.main()
