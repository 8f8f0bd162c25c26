"""Feasible and selected steps built from copula draws and truncated marginals.

Instead of resampling, a feasible step can be produced by pushing a draw u of
the copula of the feasible step through the inverse truncated marginals of
the frame coordinates and rotating back:

    G(δ, u) = Q (F⁻¹_{1,δ}(u_1), ..., F⁻¹_{n,δ}(u_n)),

and a selected step as the image with the largest first coordinate among λ
such draws. Only the first frame coordinate g(M) is truncated, so the
construction is exact when the frame coordinates are independent: then the
copula of the feasible step does not depend on δ.
"""
import logging

import numpy as np

from .commons import DimensionMismatchError, clamp_unit
from .dist import CopulaStepDistribution, StepDistribution
from .marginals import Marginal
from .problem import RotationFrame

logger = logging.getLogger(__name__)


class TruncatedMarginalSet:
    """Marginal laws of the frame coordinates of the feasible step at a fixed δ.

    Attributes:
        delta (float): The truncation point of the first coordinate.
        marginals (list[Marginal]): Untruncated laws of the frame coordinates.
        feasible_mass (float): F_1(δ).
    """
    def __init__(self, delta: float, marginals: list[Marginal]):
        self.delta = float(delta)
        self.marginals = list(marginals)
        self.feasible_mass = float(self.marginals[0].cdf(self.delta))
        if not self.feasible_mass > 0.0:
            raise ValueError(f"First frame coordinate has no mass below delta={delta!r}.")

    @property
    def n(self) -> int:
        return len(self.marginals)

    def cdf(self, k: int, x):
        """F_{k,δ}(x); k is 1-based."""
        marginal = self.marginals[k - 1]
        if k == 1:
            return marginal.cdf(np.minimum(x, self.delta)) / self.feasible_mass
        return marginal.cdf(x)

    def quantile(self, k: int, u):
        """F⁻¹_{k,δ}(u), with `u` clamped to [1e-12, 1 - 1e-12]."""
        u = clamp_unit(np.asarray(u, dtype=np.float64))
        marginal = self.marginals[k - 1]
        if k == 1:
            return np.minimum(marginal.quantile(u * self.feasible_mass), self.delta)
        return marginal.quantile(u)


def build_truncated_marginals(dist: StepDistribution, delta: float) -> TruncatedMarginalSet:
    """Truncated marginals of the feasible step of `dist` at `delta`.

    Raises:
        ValueError: If the frame coordinates of `dist` are not independent; the
            copula of the feasible step would then depend on δ.
    """
    if not dist.rotated_coordinates_independent:
        raise ValueError(f"{dist.describe()} does not have independent frame coordinates; "
                         "the truncated-marginal construction is not exact for it.")
    return TruncatedMarginalSet(delta, [dist.rotated_marginal(k) for k in range(1, dist.n + 1)])


def sample_copula_uniforms(dist: StepDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draws `size` points of the copula of the frame coordinates, shape (size, n).

    The first two columns follow the copula of a `CopulaStepDistribution`;
    every other column is an independent uniform.
    """
    u = rng.random((size, dist.n))
    if isinstance(dist, CopulaStepDistribution):
        u[:, :2] = dist.copula.sample(rng, size)
    return clamp_unit(u)


def _check_inputs(delta: float, marginals: TruncatedMarginalSet, frame: RotationFrame, u: np.ndarray) -> None:
    if float(delta) != marginals.delta:
        raise ValueError(f"Marginals were truncated at delta={marginals.delta!r}, not {delta!r}.")
    if marginals.n != frame.n or u.shape[-1] != frame.n:
        raise DimensionMismatchError(f"Expected dimension {frame.n}, got marginals {marginals.n} and u {u.shape}.")


def map_G(delta: float, u, marginals: TruncatedMarginalSet, frame: RotationFrame) -> np.ndarray:
    """G(δ, u): a feasible step from a point of the unit cube.

    Args:
        delta (float): Normalised distance.
        u: Point(s) in (0, 1)^n, shape (n,) or (m, n).
        marginals (TruncatedMarginalSet): Built for `delta`.
        frame (RotationFrame): The constraint frame.

    Returns:
        numpy.ndarray: Canonical coordinates, shaped like `u`.
    """
    u = np.asarray(u, dtype=np.float64)
    _check_inputs(delta, marginals, frame, u)
    z = np.empty_like(u)
    for k in range(1, frame.n + 1):
        z[..., k - 1] = marginals.quantile(k, u[..., k - 1])
    return frame.from_frame(z)


def map_G_star(delta: float, v, marginals: TruncatedMarginalSet, frame: RotationFrame) -> np.ndarray:
    """G⋆(δ, v): the image G(δ, v_i) with the largest first coordinate.

    Args:
        v: λ copula draws, shape (λ, n), or a batch of shape (m, λ, n).

    Returns:
        numpy.ndarray: Shape (n,) or (m, n).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim not in (2, 3):
        raise DimensionMismatchError(f"v must have shape (lambda, n) or (m, lambda, n), got {v.shape}.")
    images = map_G(delta, v, marginals, frame)
    winners = np.argmax(images[..., 0], axis=-1)
    if images.ndim == 2:
        return images[winners]
    return images[np.arange(images.shape[0]), winners]


def sample_selected_steps_by_copula(dist: StepDistribution, lam: int, delta: float, count: int,
                                    rng: np.random.Generator) -> np.ndarray:
    """`count` outputs of G⋆(δ, ·) from fresh copula draws, shape (count, n)."""
    marginals = build_truncated_marginals(dist, delta)
    v = sample_copula_uniforms(dist, rng, count * lam).reshape(count, lam, dist.n)
    return map_G_star(delta, v, marginals, dist.frame)
