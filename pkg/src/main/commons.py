"""Common utility functions and custom exceptions for the simulator.

This module provides helpers used across the package: file reading, the
domain exceptions, seeded random streams, unit-interval clamping and the
bisection routines behind every generalized inverse (marginal quantiles,
copula conditional inversion).
"""
import logging
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

UNIT_CLAMP = 1e-12
"""Copula and quantile inputs are clamped to [UNIT_CLAMP, 1 - UNIT_CLAMP]."""

BISECTION_TOLERANCE = 1e-10
BISECTION_MAX_ITERATIONS = 200

# Stream keys, combined with the user seed in a SeedSequence.
STREAM_KEY_REPLICA = 0
STREAM_KEY_BOOTSTRAP = 1
STREAM_KEY_DIAGNOSTICS = 2
STREAM_KEY_TRANSFORMED = 3


class DimensionMismatchError(ValueError):
    """Raised when a vector or matrix does not have the expected dimension."""


class ResampleCapError(RuntimeError):
    """Raised when a child needed more resampling attempts than allowed.

    Attributes:
        attempts (int): Number of rejected candidates drawn for the child.
    """
    def __init__(self, attempts: int, delta: float):
        super().__init__(f"Resample cap exceeded after {attempts} attempts at delta={delta!r}; "
                         "the feasible set has (numerically) no mass for this distribution.")
        self.attempts = attempts
        self.delta = delta


class QuadratureError(RuntimeError):
    """Raised when an adaptive quadrature did not reach its tolerance.

    Attributes:
        achieved_tolerance (float): Error estimate reported by the integrator.
    """
    def __init__(self, message: str, achieved_tolerance: float):
        super().__init__(f"{message} (achieved tolerance {achieved_tolerance:.3e})")
        self.achieved_tolerance = achieved_tolerance


class QuantileInversionError(RuntimeError):
    """Raised when a generalized inverse could not be bracketed."""


class ConfigError(ValueError):
    """Raised for an invalid experiment configuration.

    Attributes:
        errors (list[str]): Every problem found, not only the first one.
    """
    def __init__(self, errors: list[str]):
        super().__init__("Invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = list(errors)


def read_str(filepath: str) -> str:
    """Reads the content of a UTF-8 file and returns it as a string.

    Args:
        filepath (str): The path to the file.

    Returns:
        str: The content of the file.
    """
    with open(filepath, 'r', encoding='utf-8') as file:
        return file.read()


def as_vector(x, n: int, name: str = "x") -> np.ndarray:
    """Converts `x` to a float64 vector of length `n`.

    Raises:
        DimensionMismatchError: If `x` is not a vector of length `n`.
    """
    vector = np.asarray(x, dtype=np.float64)
    if vector.shape != (n,):
        raise DimensionMismatchError(f"{name} must have shape ({n},), got {vector.shape}.")
    return vector


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Creates an independent PCG64 stream for `(seed, *keys)`.

    Distinct key tuples give statistically independent streams, which is how
    replicas, bootstrap resampling and diagnostics get their own randomness
    from a single user seed.

    Args:
        seed (int): Non-negative 64-bit user seed.
        *keys (int): Stream path below the seed.

    Returns:
        numpy.random.Generator: The seeded generator.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit non-negative integer, got {seed}.")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


def clamp_unit(u):
    """Clamps probabilities to [UNIT_CLAMP, 1 - UNIT_CLAMP]."""
    return np.clip(u, UNIT_CLAMP, 1.0 - UNIT_CLAMP)


def bisect_increasing(func: Callable[[np.ndarray], np.ndarray],
                      target,
                      lo,
                      hi,
                      tol: float = BISECTION_TOLERANCE,
                      max_iter: int = BISECTION_MAX_ITERATIONS) -> np.ndarray:
    """Solves `func(x) = target` for a nondecreasing `func` on `[lo, hi]`.

    The search is vectorised: `target`, `lo` and `hi` broadcast together and
    each entry gets its own bracket. The smallest `x` with `func(x) >= target`
    is returned within `tol`.

    Args:
        func: Elementwise nondecreasing function.
        target: Values to reach.
        lo: Lower bracket ends.
        hi: Upper bracket ends.
        tol (float): Absolute tolerance on `x`.
        max_iter (int): Iteration cap.

    Returns:
        numpy.ndarray: The solutions.
    """
    target, lo, hi = np.broadcast_arrays(np.asarray(target, dtype=np.float64),
                                         np.asarray(lo, dtype=np.float64),
                                         np.asarray(hi, dtype=np.float64))
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(max_iter):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        below = func(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def bisect_quantile(cdf: Callable[[np.ndarray], np.ndarray],
                    u,
                    tol: float = BISECTION_TOLERANCE,
                    max_iter: int = BISECTION_MAX_ITERATIONS) -> np.ndarray:
    """Generalized inverse of a CDF on the real line by bracketing and bisection.

    Args:
        cdf: Vectorised CDF.
        u: Probabilities in (0, 1).
        tol (float): Absolute tolerance on the quantile.
        max_iter (int): Cap for both bracket expansion and bisection.

    Returns:
        numpy.ndarray: Quantiles with the shape of `u`.

    Raises:
        QuantileInversionError: If no finite bracket is found.
    """
    u = np.asarray(u, dtype=np.float64)
    lo = np.full(u.shape, -1.0)
    hi = np.full(u.shape, 1.0)
    for _ in range(max_iter):
        grow_lo = cdf(lo) >= u
        grow_hi = cdf(hi) < u
        if not (np.any(grow_lo) or np.any(grow_hi)):
            break
        lo = np.where(grow_lo, 2.0 * lo, lo)
        hi = np.where(grow_hi, 2.0 * hi, hi)
    else:
        raise QuantileInversionError(f"Could not bracket quantiles for u in [{u.min()}, {u.max()}].")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise QuantileInversionError("Quantile bracket overflowed.")
    return bisect_increasing(cdf, u, lo, hi, tol=tol, max_iter=max_iter)
