"""Linear objective, linear constraint and the constraint-aligned frame.

The optimisation problem is the canonical one: maximise f(x) = [x]_1
subject to g(x) = [x]_1 cos θ + [x]_2 sin θ <= 0, with θ in (0, π/2).
`RotationFrame` maps the canonical basis to (∇g, ∇g⊥, e3, ..., en), the
coordinates in which the constraint is a single half-line.
"""
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator

from .commons import DimensionMismatchError, as_vector

logger = logging.getLogger(__name__)

THETA_MARGIN = 1e-6


class RotationFrame:
    """Orthogonal change of basis to (∇g, ∇g⊥, e3, ..., en).

    Attributes:
        theta (float): The angle defining ∇g = (cos θ, sin θ, 0, ..., 0).
        n (int): Dimension.
        forward (numpy.ndarray): Q, whose first two columns are ∇g and ∇g⊥.
        inverse (numpy.ndarray): Qᵀ.
    """
    def __init__(self, theta: float, n: int):
        if n < 2:
            raise ValueError(f"A rotation frame needs n >= 2, got {n}.")
        self.theta = float(theta)
        self.n = int(n)
        self.cos_theta = math.cos(self.theta)
        self.sin_theta = math.sin(self.theta)
        forward = np.eye(self.n)
        forward[0, 0] = self.cos_theta
        forward[1, 0] = self.sin_theta
        forward[0, 1] = -self.sin_theta
        forward[1, 1] = self.cos_theta
        forward.setflags(write=False)
        self.forward = forward
        self.inverse = forward.T

    @classmethod
    def identity(cls, n: int) -> 'RotationFrame':
        """The frame of θ = 0, where rotated and canonical coordinates agree."""
        return cls(0.0, n)

    def to_frame(self, x) -> np.ndarray:
        """Coordinates of `x` (shape (..., n)) in the constraint frame: Qᵀx."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n:
            raise DimensionMismatchError(f"Expected trailing dimension {self.n}, got {x.shape}.")
        return x @ self.forward

    def from_frame(self, z) -> np.ndarray:
        """Canonical coordinates of frame coordinates `z`: Qz."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.n:
            raise DimensionMismatchError(f"Expected trailing dimension {self.n}, got {z.shape}.")
        return z @ self.inverse

    def constraint_values(self, x) -> np.ndarray:
        """g evaluated on the last axis of `x`.

        Every feasibility test and δ update in the package goes through this
        expression so that the comparisons and the recurrence agree bit for bit.
        """
        x = np.asarray(x, dtype=np.float64)
        return self.cos_theta * x[..., 0] + self.sin_theta * x[..., 1]

    def __repr__(self):
        return f"RotationFrame(theta={self.theta!r}, n={self.n})"


class Problem(BaseModel):
    """A constant step-size (1,λ)-ES setting on the linearly constrained problem.

    Attributes:
        n (int): Dimension, at least 2.
        lam (int): Offspring count λ, at least 2.
        theta (float): Constraint angle in the open interval (0, π/2).
        sigma (float): Constant step size, positive.
    """
    model_config = ConfigDict(frozen=True, extra='forbid')

    n: int = Field(ge=2)
    lam: int = Field(ge=2)
    theta: float
    sigma: float = Field(default=1.0, gt=0.0)

    _frame: RotationFrame = PrivateAttr()

    @field_validator("theta")
    @classmethod
    def _check_theta(cls, value: float) -> float:
        # Angles closer than THETA_MARGIN to 0 or π/2 are treated as the degenerate boundary.
        if not (THETA_MARGIN <= value <= math.pi / 2 - THETA_MARGIN) or not math.isfinite(value):
            raise ValueError(f"theta must lie in the open interval (0, pi/2), got {value!r}")
        return value

    def model_post_init(self, __context) -> None:
        self._frame = RotationFrame(self.theta, self.n)

    @property
    def frame(self) -> RotationFrame:
        """The constraint frame of this problem."""
        return self._frame

    @property
    def grad_g(self) -> np.ndarray:
        """∇g = (cos θ, sin θ, 0, ..., 0)."""
        return self.frame.forward[:, 0].copy()

    def start_point(self, delta0: float) -> np.ndarray:
        """A feasible parent at normalised distance `delta0` from the boundary."""
        if delta0 < 0:
            raise ValueError(f"delta0 must be non-negative, got {delta0!r}.")
        return -self.sigma * delta0 * self.grad_g

    def is_feasible(self, x) -> bool:
        """True iff g(x) <= 0."""
        return bool(constraint(x, self.theta, self.n) <= 0.0)


def _check_point(x, n: int | None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 2:
        raise DimensionMismatchError(f"Expected a vector of dimension >= 2, got shape {x.shape}.")
    if n is not None:
        x = as_vector(x, n)
    return x


def objective(x, n: int | None = None) -> float:
    """f(x) = [x]_1.

    Args:
        x: Point in R^n.
        n (int | None): Expected dimension, checked when given.

    Returns:
        float: The first coordinate.
    """
    return float(_check_point(x, n)[0])


def constraint(x, theta: float, n: int | None = None) -> float:
    """g(x) = [x]_1 cos θ + [x]_2 sin θ; x is feasible iff g(x) <= 0."""
    x = _check_point(x, n)
    return float(math.cos(theta) * x[0] + math.sin(theta) * x[1])


def rotate_to_constraint_frame(x, frame: RotationFrame) -> np.ndarray:
    """Coordinates of `x` in (∇g, ∇g⊥, e3, ..., en); the first one is g(x)."""
    return frame.to_frame(as_vector(x, frame.n))


def rotate_from_constraint_frame(z, frame: RotationFrame) -> np.ndarray:
    """Inverse of `rotate_to_constraint_frame`."""
    return frame.from_frame(as_vector(z, frame.n, name="z"))
