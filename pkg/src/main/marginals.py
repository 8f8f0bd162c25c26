"""One-dimensional continuous laws used as marginals of step distributions.

A `Marginal` wraps a frozen `scipy.stats` continuous distribution and exposes
the handful of operations the rest of the package needs: density, CDF,
quantile and sampling. Quantiles come from scipy's `ppf` when the family
provides one and fall back to bisection on the CDF otherwise.
"""
import logging
from typing import Callable

import numpy as np
import scipy.stats

from .commons import bisect_quantile, clamp_unit

logger = logging.getLogger(__name__)


class Marginal:
    """A univariate absolutely continuous law.

    Attributes:
        name (str): Human readable description, e.g. ``"t(1)"``.
    """
    def __init__(self, frozen, name: str | None = None, use_ppf: bool = True):
        """Initializes the marginal.

        Args:
            frozen: A frozen scipy.stats continuous distribution.
            name (str | None): Display name; derived from the family when omitted.
            use_ppf (bool): Use the family's closed-form quantile. When False
                the quantile is computed by bisection on the CDF.

        Raises:
            ValueError: If `frozen` is not a continuous law with a usable CDF.
        """
        if not (hasattr(frozen, "dist") and isinstance(frozen.dist, scipy.stats.rv_continuous)):
            raise ValueError(f"Marginal needs a frozen continuous scipy.stats law, got {type(frozen).__name__}.")
        values = frozen.cdf(np.array([-1.0, 0.0, 1.0]))
        if not np.all(np.isfinite(values)) or np.any(np.diff(values) < 0):
            raise ValueError(f"Marginal {name or frozen.dist.name} has no invertible CDF.")
        self._frozen = frozen
        self._use_ppf = use_ppf
        args = ", ".join(repr(a) for a in frozen.args)
        self.name = name or f"{frozen.dist.name}({args})"

    @classmethod
    def from_callables(cls, cdf: Callable, pdf: Callable, name: str) -> 'Marginal':
        """Builds a marginal from plain CDF/PDF callables (quantile by bisection)."""
        marginal = cls.__new__(cls)
        marginal._frozen = None
        marginal._use_ppf = False
        marginal._cdf = cdf
        marginal._pdf = pdf
        marginal.name = name
        return marginal

    def cdf(self, x):
        """Cumulative distribution function."""
        if self._frozen is None:
            return self._cdf(np.asarray(x, dtype=np.float64))
        return self._frozen.cdf(x)

    def pdf(self, x):
        """Probability density function."""
        if self._frozen is None:
            return self._pdf(np.asarray(x, dtype=np.float64))
        return self._frozen.pdf(x)

    def quantile(self, u):
        """Generalized inverse of the CDF; `u` is clamped to the open unit interval."""
        u = clamp_unit(np.asarray(u, dtype=np.float64))
        if self._frozen is not None and self._use_ppf:
            return self._frozen.ppf(u)
        return bisect_quantile(self.cdf, u)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draws i.i.d. variates by inversion of uniforms from `rng`."""
        if self._frozen is not None and self._use_ppf:
            return np.asarray(self._frozen.rvs(size=size, random_state=rng), dtype=np.float64)
        return self.quantile(rng.random(size))

    def __repr__(self):
        return f"Marginal({self.name})"


def make_marginal(description: str) -> Marginal:
    """Parses a marginal description such as ``"norm"``, ``"t 3"`` or ``"cauchy 0 2"``.

    The first token names a `scipy.stats` continuous family, the remaining
    tokens are its positional parameters (shape parameters, then loc, scale).

    Args:
        description (str): The description.

    Returns:
        Marginal: The parsed law.

    Raises:
        ValueError: For unknown families or invalid parameters.
    """
    tokens = description.split()
    if not tokens:
        raise ValueError("Empty marginal description.")
    family = getattr(scipy.stats, tokens[0], None)
    if not isinstance(family, scipy.stats.rv_continuous):
        raise ValueError(f"Unknown continuous family '{tokens[0]}'.")
    try:
        params = [float(token) for token in tokens[1:]]
    except ValueError as e:
        raise ValueError(f"Non-numeric parameter in marginal '{description}'.") from e
    try:
        frozen = family(*params)
        density = frozen.pdf(np.array([-1.0, 0.0, 1.0]))
        support_ok = bool(np.all(np.isfinite(density)) and np.all(density > 0))
    except (TypeError, ValueError) as e:
        raise ValueError(f"Invalid parameters for marginal '{description}': {e}") from e
    if not support_ok:
        raise ValueError(f"Marginal '{description}' must have a strictly positive density on the real line.")
    logger.debug(f"Parsed marginal '{description}'.")
    return Marginal(frozen, name=description)


STANDARD_NORMAL = Marginal(scipy.stats.norm(), name="norm")
