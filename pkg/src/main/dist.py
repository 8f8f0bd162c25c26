"""Step distributions: the law F of the raw step M of the ES.

This module defines:
- `StepDistribution`: abstract interface every step law implements (density,
  vectorised sampling, marginals of the coordinates in the constraint frame,
  the joint law of the first two frame coordinates).
- `GaussianStepDistribution`, `CopulaStepDistribution` (Archimedean copula on
  the first two frame coordinates, independent tails) and
  `IsotropicStudentTDistribution`.
- `StepStream`: a buffered, seeded source of raw steps that hands out feasible
  candidates in draw order (resampling).

A distribution is bound to the `RotationFrame` of the constraint it is used
with. The oracles in `es_core` read θ from that frame.
"""
import abc
import logging
import math

import numpy as np
import scipy.stats

from .archimedean import Copula2D
from .commons import DimensionMismatchError, ResampleCapError
from .marginals import Marginal, STANDARD_NORMAL
from .order_statistics import expected_normal_maximum
from .problem import RotationFrame

logger = logging.getLogger(__name__)

RESAMPLE_CAP = 10**6
"""Maximum number of rejected candidates drawn for a single child."""

TAIL_PROBABILITY = 1e-11
"""Marginal quantile level bounding the quadrature boxes."""


class StepDistribution(abc.ABC):
    """Abstract law of the raw step M in R^n.

    Attributes:
        n (int): Dimension.
        frame (RotationFrame): The constraint frame the rotated marginals refer to.
        isotropic_after_whitening (bool): Declared property C^(-1/2) F isotropic.
    """
    isotropic_after_whitening: bool = False

    def __init__(self, n: int, frame: RotationFrame | None):
        if n < 2:
            raise ValueError(f"Step distributions need n >= 2, got {n}.")
        frame = frame or RotationFrame.identity(n)
        if frame.n != n:
            raise DimensionMismatchError(f"Frame dimension {frame.n} does not match n={n}.")
        self.n = int(n)
        self.frame = frame

    @property
    def dimension(self) -> int:
        return self.n

    @abc.abstractmethod
    def density(self, x) -> np.ndarray:
        """Density h at points `x` of shape (..., n)."""
        raise NotImplementedError("Subclasses must implement this method.")

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draws `size` i.i.d. steps, shape (size, n)."""
        raise NotImplementedError("Subclasses must implement this method.")

    @abc.abstractmethod
    def rotated_marginal(self, k: int) -> Marginal:
        """Law of the k-th frame coordinate (k is 1-based; k = 1 is g(M))."""
        raise NotImplementedError("Subclasses must implement this method.")

    @abc.abstractmethod
    def rotated_block_density(self, z1, z2) -> np.ndarray:
        """Joint density of the first two frame coordinates (M·∇g, M·∇g⊥)."""
        raise NotImplementedError("Subclasses must implement this method.")

    @property
    def rotated_coordinates_independent(self) -> bool:
        """True when the frame coordinates of M are mutually independent."""
        return False

    @property
    def covariance(self) -> np.ndarray | None:
        """Covariance matrix of M, or None when unknown or infinite."""
        return None

    @abc.abstractmethod
    def rotated_conditional_cdf(self, z2, z1):
        """P(second frame coordinate <= z2 | first = z1), vectorised."""
        raise NotImplementedError("Subclasses must implement this method.")

    def marginal_cdf_rotated(self, k: int, x):
        """CDF of the k-th frame coordinate."""
        self._check_k(k)
        return self.rotated_marginal(k).cdf(x)

    def marginal_quantile_rotated(self, k: int, u):
        """Generalized inverse of `marginal_cdf_rotated(k, .)`."""
        self._check_k(k)
        return self.rotated_marginal(k).quantile(u)

    def rotated_box(self, tail: float = TAIL_PROBABILITY) -> tuple[tuple[float, float], tuple[float, float]]:
        """Bounds of the first two frame coordinates leaving `tail` mass outside each side."""
        bounds = []
        for k in (1, 2):
            marginal = self.rotated_marginal(k)
            bounds.append((float(marginal.quantile(tail)), float(marginal.quantile(1.0 - tail))))
        return bounds[0], bounds[1]

    def unconstrained_selected_mean(self, lam: int) -> float | None:
        """lim_{δ→∞} E[g(M⋆) | δ] when known in closed form, else None."""
        return None

    def _check_k(self, k: int) -> None:
        if not 1 <= k <= self.n:
            raise ValueError(f"Coordinate index k must be in [1, {self.n}], got {k}.")

    def describe(self) -> str:
        return f"{type(self).__name__}(n={self.n}, theta={self.frame.theta:.6g})"


class GaussianStepDistribution(StepDistribution):
    """Centred multivariate normal N(0, C)."""
    isotropic_after_whitening = True

    def __init__(self, covariance, frame: RotationFrame | None = None):
        covariance = np.array(covariance, dtype=np.float64)
        if covariance.ndim != 2 or covariance.shape[0] != covariance.shape[1]:
            raise DimensionMismatchError(f"Covariance must be square, got shape {covariance.shape}.")
        if not np.allclose(covariance, covariance.T, rtol=0.0, atol=1e-12):
            raise ValueError("Covariance must be symmetric.")
        try:
            cholesky = np.linalg.cholesky(covariance)
        except np.linalg.LinAlgError as e:
            raise ValueError("Covariance must be symmetric positive definite.") from e
        super().__init__(covariance.shape[0], frame)
        covariance.setflags(write=False)
        self._covariance = covariance
        self._cholesky = cholesky
        self._law = scipy.stats.multivariate_normal(mean=np.zeros(self.n), cov=covariance)
        rotated = self.frame.inverse @ covariance @ self.frame.forward
        self._rotated_covariance = 0.5 * (rotated + rotated.T)
        self._block_law = scipy.stats.multivariate_normal(mean=np.zeros(2), cov=self._rotated_covariance[:2, :2])
        self._marginals = [Marginal(scipy.stats.norm(0.0, math.sqrt(self._rotated_covariance[k, k])),
                                    name=f"norm 0 {math.sqrt(self._rotated_covariance[k, k]):.6g}")
                           for k in range(self.n)]

    @property
    def covariance(self) -> np.ndarray:
        return self._covariance

    @property
    def rotated_covariance(self) -> np.ndarray:
        """QᵀCQ, the covariance of the frame coordinates."""
        return self._rotated_covariance

    @property
    def rotated_coordinates_independent(self) -> bool:
        off_diagonal = self._rotated_covariance - np.diag(np.diag(self._rotated_covariance))
        return bool(np.all(np.abs(off_diagonal) <= 1e-12 * np.max(np.abs(self._rotated_covariance))))

    def density(self, x):
        return np.asarray(self._law.pdf(np.asarray(x, dtype=np.float64)))

    def sample(self, rng, size):
        return rng.standard_normal((size, self.n)) @ self._cholesky.T

    def rotated_marginal(self, k):
        self._check_k(k)
        return self._marginals[k - 1]

    def rotated_block_density(self, z1, z2):
        z1, z2 = np.broadcast_arrays(np.asarray(z1, dtype=np.float64), np.asarray(z2, dtype=np.float64))
        return np.asarray(self._block_law.pdf(np.stack([z1, z2], axis=-1)))

    def rotated_conditional_cdf(self, z2, z1):
        s = self._rotated_covariance
        mean = s[0, 1] / s[0, 0] * np.asarray(z1, dtype=np.float64)
        std = math.sqrt(max(s[1, 1] - s[0, 1] ** 2 / s[0, 0], 0.0))
        if std == 0.0:
            return np.where(np.asarray(z2) >= mean, 1.0, 0.0)
        return scipy.stats.norm.cdf((np.asarray(z2, dtype=np.float64) - mean) / std)

    def unconstrained_selected_mean(self, lam):
        c = self._covariance
        slope = self.frame.cos_theta + self.frame.sin_theta * c[0, 1] / c[0, 0]
        return slope * math.sqrt(c[0, 0]) * expected_normal_maximum(lam)


class CopulaStepDistribution(StepDistribution):
    """Step law built in the constraint frame from a copula and marginals.

    The first two frame coordinates (M·∇g, M·∇g⊥) have marginals H1, H2 joined
    by the copula C; the remaining frame coordinates are independent with the
    tail law. M itself is the frame image Q z (Jacobian 1).
    """
    def __init__(self,
                 copula: Copula2D,
                 marginal1: Marginal,
                 marginal2: Marginal,
                 tail: list[Marginal],
                 frame: RotationFrame,
                 isotropic_after_whitening: bool = False):
        super().__init__(frame.n, frame)
        if len(tail) != self.n - 2:
            raise DimensionMismatchError(f"Expected {self.n - 2} tail laws, got {len(tail)}.")
        self.copula = copula
        self._marginals = [marginal1, marginal2, *tail]
        self.isotropic_after_whitening = isotropic_after_whitening

    @property
    def rotated_coordinates_independent(self) -> bool:
        return self.copula.is_independence

    def density(self, x):
        z = self.frame.to_frame(x)
        m1, m2 = self._marginals[:2]
        value = (self.copula.density(m1.cdf(z[..., 0]), m2.cdf(z[..., 1]))
                 * m1.pdf(z[..., 0]) * m2.pdf(z[..., 1]))
        for k, marginal in enumerate(self._marginals[2:], start=2):
            value = value * marginal.pdf(z[..., k])
        return np.asarray(value)

    def sample(self, rng, size):
        u = self.copula.sample(rng, size)
        z = np.empty((size, self.n))
        z[:, 0] = self._marginals[0].quantile(u[:, 0])
        z[:, 1] = self._marginals[1].quantile(u[:, 1])
        for k, marginal in enumerate(self._marginals[2:], start=2):
            z[:, k] = marginal.sample(rng, size)
        return self.frame.from_frame(z)

    def rotated_marginal(self, k):
        self._check_k(k)
        return self._marginals[k - 1]

    def rotated_block_density(self, z1, z2):
        m1, m2 = self._marginals[:2]
        return np.asarray(self.copula.density(m1.cdf(z1), m2.cdf(z2)) * m1.pdf(z1) * m2.pdf(z2))

    def rotated_conditional_cdf(self, z2, z1):
        m1, m2 = self._marginals[:2]
        return self.copula.conditional_cdf(m1.cdf(z1), m2.cdf(z2))

    def describe(self):
        names = ", ".join(m.name for m in self._marginals)
        return f"CopulaStepDistribution({self.copula!r}; {names}; theta={self.frame.theta:.6g})"


class IsotropicStudentTDistribution(StepDistribution):
    """Isotropic multivariate Student t with identity shape and `df` degrees of freedom."""
    isotropic_after_whitening = True

    def __init__(self, n: int, df: float, frame: RotationFrame | None = None):
        if not df > 0:
            raise ValueError(f"Degrees of freedom must be positive, got {df!r}.")
        super().__init__(n, frame)
        self.df = float(df)
        self._law = scipy.stats.multivariate_t(loc=np.zeros(self.n), shape=np.eye(self.n), df=self.df)
        self._block_law = scipy.stats.multivariate_t(loc=np.zeros(2), shape=np.eye(2), df=self.df)
        self._marginal = Marginal(scipy.stats.t(self.df), name=f"t {self.df:g}")

    @property
    def covariance(self):
        if self.df <= 2:
            return None
        return np.eye(self.n) * self.df / (self.df - 2.0)

    def density(self, x):
        return np.asarray(self._law.pdf(np.asarray(x, dtype=np.float64)))

    def sample(self, rng, size):
        normal = rng.standard_normal((size, self.n))
        mixing = rng.chisquare(self.df, size)
        return normal / np.sqrt(mixing / self.df)[:, None]

    def rotated_marginal(self, k):
        self._check_k(k)
        return self._marginal

    def rotated_block_density(self, z1, z2):
        z1, z2 = np.broadcast_arrays(np.asarray(z1, dtype=np.float64), np.asarray(z2, dtype=np.float64))
        return np.asarray(self._block_law.pdf(np.stack([z1, z2], axis=-1)))

    def rotated_conditional_cdf(self, z2, z1):
        z1 = np.asarray(z1, dtype=np.float64)
        scale = np.sqrt((self.df + z1**2) / (self.df + 1.0))
        return scipy.stats.t.cdf(np.asarray(z2, dtype=np.float64) / scale, self.df + 1.0)


def gaussian_step_distribution(n: int, covariance=None, frame: RotationFrame | None = None) -> GaussianStepDistribution:
    """N(0, C) in dimension n, bound to `frame` (identity frame when omitted).

    Args:
        n (int): Dimension.
        covariance: Symmetric positive definite n×n matrix; identity when omitted.
        frame (RotationFrame | None): Constraint frame for the rotated marginals.

    Raises:
        ValueError: If the covariance is not SPD or not n×n.
    """
    covariance = np.eye(n) if covariance is None else np.asarray(covariance, dtype=np.float64)
    if covariance.shape != (n, n):
        raise DimensionMismatchError(f"Covariance must be {n}x{n}, got {covariance.shape}.")
    return GaussianStepDistribution(covariance, frame)


def copula_marginal_distribution(copula: Copula2D,
                                 marginal1: Marginal,
                                 marginal2: Marginal,
                                 tail: list[Marginal] | None,
                                 frame: RotationFrame,
                                 isotropic_after_whitening: bool = False) -> CopulaStepDistribution:
    """Step law whose first two frame coordinates are joined by `copula`.

    Args:
        copula (Copula2D): Dependence of (M·∇g, M·∇g⊥).
        marginal1 (Marginal): Law of M·∇g = g(M).
        marginal2 (Marginal): Law of M·∇g⊥.
        tail (list[Marginal] | None): Laws of the remaining frame coordinates;
            standard normal when omitted.
        frame (RotationFrame): The constraint frame.
        isotropic_after_whitening (bool): Declared isotropy of the whitened law.

    Raises:
        ValueError: If a marginal is not a `Marginal` with invertible CDF.
    """
    for marginal in (marginal1, marginal2, *(tail or [])):
        if not isinstance(marginal, Marginal):
            raise ValueError(f"Marginals must be Marginal instances with an invertible CDF, got {marginal!r}.")
    if tail is None:
        tail = [STANDARD_NORMAL] * (frame.n - 2)
    dist = CopulaStepDistribution(copula, marginal1, marginal2, list(tail), frame, isotropic_after_whitening)
    logger.debug(f"Built step law {dist.describe()}.")
    return dist


def isotropic_student_t_distribution(n: int, df: float, frame: RotationFrame | None = None) -> IsotropicStudentTDistribution:
    """Isotropic multivariate t law with `df` degrees of freedom."""
    return IsotropicStudentTDistribution(n, df, frame)


class StepStream:
    """Buffered i.i.d. raw steps of one distribution from one random stream.

    Feasible candidates are handed out in draw order, skipping infeasible
    ones; this is the resampling of the ES, and the accepted candidates are
    i.i.d. with the feasible-step law. Blocks are drawn with vectorised
    sampling so the per-iteration cost stays small.

    Attributes:
        accepted (int): Candidates handed out so far.
        rejected (int): Candidates skipped as infeasible so far.
    """
    def __init__(self,
                 dist: StepDistribution,
                 rng: np.random.Generator,
                 block_size: int = 4096,
                 resample_cap: int = RESAMPLE_CAP):
        self.dist = dist
        self.rng = rng
        self.block_size = int(block_size)
        self.resample_cap = int(resample_cap)
        self.accepted = 0
        self.rejected = 0
        self._steps = np.empty((0, dist.n))
        self._g = np.empty(0)
        self._pos = 0
        self._gap = 0

    def _refill(self) -> None:
        self._steps = self.dist.sample(self.rng, self.block_size)
        self._g = self.dist.frame.constraint_values(self._steps)
        self._pos = 0

    def take_raw(self, count: int) -> np.ndarray:
        """Returns the next `count` raw steps without feasibility filtering."""
        chunks = []
        remaining = count
        while remaining > 0:
            if self._pos >= len(self._g):
                self._refill()
            take = min(remaining, len(self._g) - self._pos)
            chunks.append(self._steps[self._pos:self._pos + take])
            self._pos += take
            remaining -= take
        return np.concatenate(chunks, axis=0) if chunks else np.empty((0, self.dist.n))

    def take_feasible(self, count: int, delta: float) -> tuple[np.ndarray, np.ndarray, int]:
        """Returns the next `count` candidates with g <= delta.

        Args:
            count (int): Number of feasible candidates wanted.
            delta (float): Feasibility threshold.

        Returns:
            tuple: (steps of shape (count, n), their g values, rejections spent).

        Raises:
            ResampleCapError: If a single candidate needed more than
                `resample_cap` rejections.
        """
        steps = np.empty((count, self.dist.n))
        g_values = np.empty(count)
        filled = 0
        rejected = 0
        window = max(16, 4 * count)
        while filled < count:
            if self._pos >= len(self._g):
                self._refill()
            end = min(len(self._g), self._pos + window)
            hits = np.flatnonzero(self._g[self._pos:end] <= delta)
            needed = count - filled
            if len(hits) == 0:
                scanned = end - self._pos
                self._gap += scanned
                rejected += scanned
                self._pos = end
                if self._gap >= self.resample_cap:
                    raise ResampleCapError(self._gap, delta)
                window *= 2
                continue
            hits = hits[:needed]
            gaps = np.diff(np.concatenate(([-1], hits))) - 1
            gaps[0] += self._gap
            if gaps.max() >= self.resample_cap:
                raise ResampleCapError(int(gaps.max()), delta)
            positions = self._pos + hits
            steps[filled:filled + len(hits)] = self._steps[positions]
            g_values[filled:filled + len(hits)] = self._g[positions]
            filled += len(hits)
            rejected += int(hits[-1] + 1 - len(hits))
            if filled < count:
                tail = end - (positions[-1] + 1)
                rejected += tail
                self._gap = tail
                self._pos = end
                if self._gap >= self.resample_cap:
                    raise ResampleCapError(self._gap, delta)
            else:
                self._gap = 0
                self._pos = int(positions[-1] + 1)
        self.accepted += count
        self.rejected += rejected
        return steps, g_values, rejected


def as_step_stream(dist: StepDistribution, rng, block_size: int = 64) -> StepStream:
    """Wraps a `numpy.random.Generator` in a stream; streams pass through."""
    if isinstance(rng, StepStream):
        if rng.dist is not dist:
            raise ValueError("The step stream was created for a different distribution.")
        return rng
    if isinstance(rng, np.random.Generator):
        return StepStream(dist, rng, block_size=block_size)
    raise ValueError(f"Expected a numpy Generator or StepStream, got {type(rng).__name__}.")
