"""Maxima of independent standard normal variables.

E[N_{λ:λ}], the mean of the largest of λ i.i.d. N(0, 1), is the reference
value for the behaviour of the ES far away from the constraint.
"""
import logging
import math

import numpy as np
import scipy.integrate
import scipy.stats

logger = logging.getLogger(__name__)


def normal_maximum_pdf(x, lam: int):
    """Density λ φ(x) Φ(x)^(λ-1) of the maximum of `lam` standard normals."""
    x = np.asarray(x, dtype=np.float64)
    return lam * scipy.stats.norm.pdf(x) * np.exp((lam - 1) * scipy.stats.norm.logcdf(x))


def expected_normal_maximum(lam: int) -> float:
    """E[max of `lam` i.i.d. standard normals].

    Uses the closed forms for λ <= 2 and QUADPACK on the order-statistic
    density otherwise.

    Raises:
        ValueError: If `lam` < 1.
    """
    if lam < 1:
        raise ValueError(f"lam must be at least 1, got {lam}.")
    if lam == 1:
        return 0.0
    if lam == 2:
        return 1.0 / math.sqrt(math.pi)
    value, error = scipy.integrate.quad(lambda x: x * float(normal_maximum_pdf(x, lam)), -np.inf, np.inf,
                                        epsabs=1e-13, epsrel=1e-12, limit=200)
    logger.debug(f"E[N_{lam}:{lam}] = {value!r} (quadrature error {error:.2e})")
    return float(value)


def sample_normal_maximum_mean(lam: int, draws: int, rng: np.random.Generator,
                               chunk: int = 100_000) -> tuple[float, float]:
    """Monte Carlo estimate of E[N_{λ:λ}] and its standard error.

    Draws are processed in chunks so 10⁷ draws fit in memory.
    """
    total = 0.0
    total_sq = 0.0
    remaining = draws
    while remaining > 0:
        size = min(chunk, remaining)
        maxima = rng.standard_normal((size, lam)).max(axis=1)
        total += float(maxima.sum())
        total_sq += float(np.dot(maxima, maxima))
        remaining -= size
    mean = total / draws
    variance = max(total_sq / draws - mean * mean, 0.0)
    return mean, math.sqrt(variance / draws)
