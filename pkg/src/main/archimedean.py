"""Archimedean generators and the two-dimensional copulas they build.

This module defines the structure shared by every generator:
- `ArchimedeanGenerator`: abstract base class for a generator ψ with its
  first two derivatives and generalized inverse. Concrete generators live in
  the `generators` package and are registered there by id.
- `Copula2D`: abstract bivariate copula (CDF, density, conditional CDF,
  sampler).
- `ArchimedeanCopula`: C(u1, u2) = ψ(ψ⁻¹(u1) + ψ⁻¹(u2)).

Copula inputs are clamped to [1e-12, 1 - 1e-12] wherever ψ⁻¹ would diverge;
the CDF applies the exact boundary values C(u, 0) = 0 and C(u, 1) = u.
"""
import abc
import logging

import numpy as np

from .commons import bisect_increasing, clamp_unit

logger = logging.getLogger(__name__)

FINITE_DIFFERENCE_STEP = 1e-4

DEFAULT_GENERATOR_GRID = np.concatenate([np.linspace(0.01, 1.0, 50), np.linspace(1.1, 10.0, 50)])


class ArchimedeanGenerator(abc.ABC):
    """Abstract base class for Archimedean generators ψ: [0, ∞] → [0, 1].

    Attributes:
        generator_id (str): Registry id of the family (class attribute).
        parameter (float): The family parameter ϑ.
    """
    generator_id: str = ""

    def __init__(self, parameter: float):
        """Initializes the generator.

        Args:
            parameter (float): The family parameter ϑ.

        Raises:
            ValueError: If `parameter` is outside the family's domain.
        """
        self.parameter = float(parameter)
        self._validate_parameter(self.parameter)

    @abc.abstractmethod
    def _validate_parameter(self, parameter: float) -> None:
        """Raises ValueError when `parameter` is outside the family's domain."""
        raise NotImplementedError("Subclasses must implement this method.")

    @abc.abstractmethod
    def psi(self, t):
        """ψ(t)."""
        raise NotImplementedError("Subclasses must implement this method.")

    @abc.abstractmethod
    def psi_inverse(self, u):
        """Generalized inverse ψ⁻¹(u) = inf{t : ψ(t) = u}."""
        raise NotImplementedError("Subclasses must implement this method.")

    @abc.abstractmethod
    def psi_prime(self, t):
        """ψ′(t) on (0, ∞)."""
        raise NotImplementedError("Subclasses must implement this method.")

    @abc.abstractmethod
    def psi_double_prime(self, t):
        """ψ″(t) on (0, ∞)."""
        raise NotImplementedError("Subclasses must implement this method.")

    def invariant_violations(self, grid=None) -> list[str]:
        """Checks the generator conditions on a grid of t.

        Checked: ψ(0) = 1, ψ(t) → 0, strict decrease, (−1)^k ψ^(k) >= 0 for
        k = 0, 1, 2, and ψ⁻¹(ψ(t)) = t within 1e-8 where ψ(t) > 0.

        Args:
            grid: Points t in (0, ∞); a default grid on (0, 10] is used when omitted.

        Returns:
            list[str]: Descriptions of the violated conditions (empty when valid).
        """
        t = DEFAULT_GENERATOR_GRID if grid is None else np.asarray(grid, dtype=np.float64)
        violations = []
        if abs(float(self.psi(0.0)) - 1.0) > 1e-12:
            violations.append("psi(0) != 1")
        # A positive limit leaves ψ flat between 1e150 and 1e300; ψ(t) → 0 keeps it decreasing there.
        far, farther = float(self.psi(1e150)), float(self.psi(1e300))
        if farther > 0.0 and not (np.isfinite(farther) and farther <= (1.0 - 1e-6) * far):
            violations.append("psi(t) does not vanish as t grows")
        values = self.psi(t)
        positive = values > 0
        if np.any(np.diff(values[positive]) >= 0):
            violations.append("psi is not strictly decreasing")
        if np.any(values < 0):
            violations.append("psi is negative")
        if np.any(self.psi_prime(t) > 0):
            violations.append("psi' is positive")
        if np.any(self.psi_double_prime(t) < 0):
            violations.append("psi'' is negative")
        roundtrip = self.psi_inverse(values[positive])
        if np.any(np.abs(roundtrip - t[positive]) > 1e-8 * np.maximum(1.0, t[positive])):
            violations.append("psi_inverse(psi(t)) != t")
        return violations

    def __repr__(self):
        return f"{type(self).__name__}(parameter={self.parameter!r})"


class Copula2D(abc.ABC):
    """Abstract bivariate copula on [0, 1]²."""

    @abc.abstractmethod
    def cdf(self, u1, u2):
        """C(u1, u2)."""
        raise NotImplementedError("Subclasses must implement this method.")

    @abc.abstractmethod
    def density(self, u1, u2):
        """c(u1, u2) = ∂²C/∂u1∂u2."""
        raise NotImplementedError("Subclasses must implement this method.")

    @abc.abstractmethod
    def conditional_cdf(self, u1, u2):
        """∂C/∂u1 (u1, u2): the CDF of U2 given U1 = u1, evaluated at u2."""
        raise NotImplementedError("Subclasses must implement this method.")

    @property
    def is_independence(self) -> bool:
        """True when the copula is the product copula."""
        return False

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draws pairs by the conditional-distribution method.

        U1 is uniform; U2 solves conditional_cdf(U1, U2) = P for an independent
        uniform P, by bisection (tolerance 1e-10, at most 200 iterations).

        Args:
            rng: Caller-owned random stream.
            size (int): Number of pairs.

        Returns:
            numpy.ndarray: Array of shape (size, 2) in the open unit square.
        """
        u1 = clamp_unit(rng.random(size))
        p = rng.random(size)
        if self.is_independence:
            return np.column_stack([u1, clamp_unit(p)])
        u2 = bisect_increasing(lambda v: self.conditional_cdf(u1, v), p, 0.0, 1.0)
        return np.column_stack([u1, clamp_unit(u2)])


class ArchimedeanCopula(Copula2D):
    """Bivariate Archimedean copula C(u1, u2) = ψ(ψ⁻¹(u1) + ψ⁻¹(u2)).

    Attributes:
        generator (ArchimedeanGenerator): The generator ψ.
    """
    def __init__(self, generator: ArchimedeanGenerator):
        self.generator = generator

    @property
    def is_independence(self) -> bool:
        return bool(getattr(self.generator, "is_independence", False))

    def _inverses(self, u1, u2):
        u1 = clamp_unit(np.asarray(u1, dtype=np.float64))
        u2 = clamp_unit(np.asarray(u2, dtype=np.float64))
        return self.generator.psi_inverse(u1), self.generator.psi_inverse(u2)

    def cdf(self, u1, u2):
        u1 = np.asarray(u1, dtype=np.float64)
        u2 = np.asarray(u2, dtype=np.float64)
        a, b = self._inverses(u1, u2)
        value = self.generator.psi(a + b)
        value = np.where(u1 >= 1.0, u2, value)
        value = np.where(u2 >= 1.0, u1, value)
        value = np.where((u1 <= 0.0) | (u2 <= 0.0), 0.0, value)
        return value[()] if np.ndim(value) == 0 else value

    def density(self, u1, u2):
        a, b = self._inverses(u1, u2)
        gen = self.generator
        value = gen.psi_double_prime(a + b) / (gen.psi_prime(a) * gen.psi_prime(b))
        return value[()] if np.ndim(value) == 0 else value

    def conditional_cdf(self, u1, u2):
        a, b = self._inverses(u1, u2)
        gen = self.generator
        value = gen.psi_prime(a + b) / gen.psi_prime(a)
        return value[()] if np.ndim(value) == 0 else value

    def __repr__(self):
        return f"ArchimedeanCopula({self.generator!r})"


def archimedean_copula(gen: ArchimedeanGenerator) -> ArchimedeanCopula:
    """Builds the bivariate copula of a generator after checking its conditions.

    Args:
        gen (ArchimedeanGenerator): The generator.

    Returns:
        ArchimedeanCopula: The copula.

    Raises:
        ValueError: If the generator violates its conditions on the test grid.
    """
    violations = gen.invariant_violations()
    if violations:
        raise ValueError(f"{gen!r} is not a valid Archimedean generator: {', '.join(violations)}.")
    logger.debug(f"Built Archimedean copula for {gen!r}.")
    return ArchimedeanCopula(gen)


def archimedean_density_check(gen: ArchimedeanGenerator, u) -> tuple[float, float]:
    """Closed-form copula density against a finite-difference ∂²C/∂u1∂u2.

    Args:
        gen (ArchimedeanGenerator): The generator.
        u: Point (u1, u2) strictly inside the unit square.

    Returns:
        tuple[float, float]: (analytic, numeric); the numeric value is the central
            mixed difference with step 1e-4.

    Raises:
        ValueError: If `u` is not strictly interior (with room for the stencil).
    """
    u1, u2 = (float(v) for v in u)
    h = FINITE_DIFFERENCE_STEP
    if not (h < u1 < 1 - h and h < u2 < 1 - h):
        raise ValueError(f"u must be strictly inside (0, 1)^2 with margin {h}, got {(u1, u2)}.")
    copula = ArchimedeanCopula(gen)
    analytic = float(copula.density(u1, u2))
    numeric = float((copula.cdf(u1 + h, u2 + h) - copula.cdf(u1 + h, u2 - h)
                     - copula.cdf(u1 - h, u2 + h) + copula.cdf(u1 - h, u2 - h)) / (4.0 * h * h))
    return analytic, numeric
