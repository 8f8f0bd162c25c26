"""One iteration of the (1,λ)-ES with resampling, and the exact step densities.

Sampling:
- `sample_feasible_step`, `select_step`, `es_iterate`, and the vectorised
  kernel draw `sample_selected_steps`.

Densities, all at a fixed normalised distance δ:
- `feasible_step_density`: h(x) 1{g(x) <= δ} / F(L_δ).
- `selected_step_density`: λ h(x) 1{g(x) <= δ} T(δ, [x]_1)^(λ-1) / F(L_δ)^λ, with
  T(δ, v) = P([M]_1 < v, g(M) <= δ) from `mass_of_truncated_halfplane`.

All integrals are taken in the constraint frame, where L_δ is {z1 <= δ} and
only the first two frame coordinates matter.
"""
import dataclasses
import logging
import warnings

import numpy as np
import scipy.integrate

from .commons import DimensionMismatchError, QuadratureError
from .dist import StepDistribution, as_step_stream
from .problem import Problem, RotationFrame

logger = logging.getLogger(__name__)

QUADRATURE_TOLERANCE = 1e-10
"""Absolute and relative tolerance requested from the adaptive rules."""

SAMPLE_CHUNK = 100_000
"""Children drawn per batch by `sample_selected_steps`."""


@dataclasses.dataclass
class ESState:
    """State of the ES between two iterations.

    Attributes:
        parent (numpy.ndarray): Feasible parent X_t.
        delta (float): Normalised distance δ_t = -g(X_t)/σ.
        iteration (int): t.
        resample_count (int): Rejected candidates so far.
    """
    parent: np.ndarray
    delta: float
    iteration: int = 0
    resample_count: int = 0

    @classmethod
    def initial(cls, problem: Problem, delta0: float) -> 'ESState':
        """State at t = 0 with the parent at distance `delta0` from the boundary."""
        return cls(parent=problem.start_point(delta0), delta=float(delta0))


@dataclasses.dataclass
class SelectedStep:
    """Outcome of one selection.

    Attributes:
        vector (numpy.ndarray): M⋆, the winning step.
        feasible_children (numpy.ndarray): The λ feasible steps, shape (λ, n).
        winner_index (int): 1-based index of the winner.
        g_value (float): g(M⋆) as used by the δ update.
        resamples (int): Candidates rejected while generating the children.
    """
    vector: np.ndarray
    feasible_children: np.ndarray
    winner_index: int
    g_value: float = float("nan")
    resamples: int = 0


def _check_bound(dist: StepDistribution, problem: Problem) -> None:
    if dist.n != problem.n:
        raise DimensionMismatchError(f"Distribution dimension {dist.n} differs from problem dimension {problem.n}.")
    if dist.frame.theta != problem.theta:
        raise ValueError(f"Distribution is bound to theta={dist.frame.theta!r}, problem has theta={problem.theta!r}.")


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not delta >= 0.0:
        raise ValueError(f"delta must be non-negative, got {delta!r}.")
    return delta


def sample_feasible_step(dist: StepDistribution, delta: float, rng) -> np.ndarray:
    """Draws M̃: the first raw step with g(M) <= δ.

    Args:
        dist (StepDistribution): Law of the raw step.
        delta (float): Normalised distance, non-negative.
        rng: `numpy.random.Generator` or a `StepStream` of `dist`.

    Returns:
        numpy.ndarray: The feasible step.

    Raises:
        ResampleCapError: If 10⁶ candidates in a row were infeasible.
    """
    delta = _check_delta(delta)
    steps, _, _ = as_step_stream(dist, rng).take_feasible(1, delta)
    return steps[0]


def select_step(children) -> SelectedStep:
    """Picks the child with the largest first coordinate; ties go to the lowest index.

    Raises:
        ValueError: If there are no children.
    """
    children = np.asarray(children, dtype=np.float64)
    if children.ndim != 2 or children.shape[0] == 0:
        raise ValueError(f"select_step needs a non-empty (lambda, n) array, got shape {children.shape}.")
    index = int(np.argmax(children[:, 0]))
    return SelectedStep(vector=children[index].copy(), feasible_children=children, winner_index=index + 1)


def es_iterate(state: ESState, problem: Problem, dist: StepDistribution, rng) -> tuple[ESState, SelectedStep]:
    """Performs one generation: λ feasible children, selection, parent and δ update.

    The δ update uses the very g values the feasibility test compared against
    δ_t, so δ_{t+1} = δ_t - g(M⋆) >= 0 holds exactly in floating point.

    Args:
        state (ESState): Current state.
        problem (Problem): The problem; `dist` must be bound to its frame.
        dist (StepDistribution): Law of the raw step.
        rng: `numpy.random.Generator` or a `StepStream` of `dist`.

    Returns:
        tuple[ESState, SelectedStep]: The next state and the selection record.
    """
    _check_bound(dist, problem)
    children, g_values, rejected = as_step_stream(dist, rng).take_feasible(problem.lam, state.delta)
    selected = select_step(children)
    selected.g_value = float(g_values[selected.winner_index - 1])
    selected.resamples = rejected
    next_state = ESState(parent=state.parent + problem.sigma * selected.vector,
                         delta=state.delta - selected.g_value,
                         iteration=state.iteration + 1,
                         resample_count=state.resample_count + rejected)
    return next_state, selected


def sample_selected_steps(dist: StepDistribution, problem: Problem, delta: float, count: int, rng) -> np.ndarray:
    """Draws `count` i.i.d. selected steps M⋆ at a fixed δ.

    Returns:
        numpy.ndarray: Array of shape (count, n).
    """
    _check_bound(dist, problem)
    delta = _check_delta(delta)
    stream = as_step_stream(dist, rng, block_size=SAMPLE_CHUNK)
    lam = problem.lam
    out = np.empty((count, dist.n))
    done = 0
    while done < count:
        batch = min(count - done, max(1, SAMPLE_CHUNK // lam))
        children, _, _ = stream.take_feasible(batch * lam, delta)
        children = children.reshape(batch, lam, dist.n)
        winners = np.argmax(children[:, :, 0], axis=1)
        out[done:done + batch] = children[np.arange(batch), winners]
        done += batch
    return out


def mass_of_feasible_set(dist: StepDistribution, delta: float) -> float:
    """F(L_δ) = P(g(M) <= δ).

    The first frame coordinate is g(M), so this is its CDF at δ.
    """
    mass = float(dist.marginal_cdf_rotated(1, delta))
    if not mass > 0.0:
        logger.warning(f"Feasible mass at delta={delta!r} underflowed to {mass!r}.")
    return mass


def _halfplane_bound(frame: RotationFrame, z1, v):
    """z2 threshold of {[M]_1 < v}: [M]_1 = cos θ z1 - sin θ z2 < v  iff  z2 > (cos θ z1 - v)/sin θ."""
    return (frame.cos_theta * z1 - v) / frame.sin_theta


def mass_of_truncated_halfplane(dist: StepDistribution, delta: float, v, method: str = "conditional"):
    """T(δ, v) = P([M]_1 < v and g(M) <= δ).

    Methods:
        ``"conditional"``: one adaptive Gauss–Kronrod integral over the first
            frame coordinate, substituted by its CDF u = H1(z1), of the
            conditional tail P(z2 > b(z1) | z1). Vectorised over `v`.
        ``"dblquad"``: nested adaptive Gauss–Kronrod on the block density over
            a box leaving 1e-11 marginal mass outside each side. Scalar `v` only.

    Args:
        dist (StepDistribution): Law of the raw step.
        delta (float): Normalised distance.
        v: Upper bound(s) on the first canonical coordinate.
        method (str): ``"conditional"`` or ``"dblquad"``.

    Returns:
        float or numpy.ndarray: The mass, shaped like `v`.

    Raises:
        QuadratureError: On non-convergence.
        ValueError: For an unknown method.
    """
    frame = dist.frame
    v_array = np.asarray(v, dtype=np.float64)
    if frame.sin_theta == 0.0:
        result = dist.marginal_cdf_rotated(1, np.minimum(delta, v_array))
    elif method == "conditional":
        result = _truncated_mass_conditional(dist, delta, v_array.ravel()).reshape(v_array.shape)
    elif method == "dblquad":
        if v_array.ndim != 0:
            raise ValueError("The dblquad method evaluates one v at a time.")
        result = _truncated_mass_dblquad(dist, delta, float(v_array))
    else:
        raise ValueError(f"Unknown quadrature method '{method}'.")
    result = np.asarray(result, dtype=np.float64)
    return float(result) if result.ndim == 0 else result


def _truncated_mass_conditional(dist: StepDistribution, delta: float, v: np.ndarray) -> np.ndarray:
    marginal1 = dist.rotated_marginal(1)
    upper = float(marginal1.cdf(delta))

    def integrand(u):
        z1 = marginal1.quantile(u)
        return 1.0 - dist.rotated_conditional_cdf(_halfplane_bound(dist.frame, z1, v), z1)

    result, error, info = scipy.integrate.quad_vec(integrand, 0.0, upper,
                                                   epsabs=QUADRATURE_TOLERANCE, epsrel=QUADRATURE_TOLERANCE,
                                                   norm="max", full_output=True)
    if info.status != 0:
        raise QuadratureError(f"Truncated half-plane mass did not converge at delta={delta!r}", error)
    return np.clip(result, 0.0, 1.0)


def _truncated_mass_dblquad(dist: StepDistribution, delta: float, v: float) -> float:
    (lo1, hi1), (lo2, hi2) = dist.rotated_box()
    upper1 = min(delta, hi1)
    if upper1 <= lo1:
        return 0.0

    def lower2(z1):
        return min(max(_halfplane_bound(dist.frame, z1, v), lo2), hi2)

    return _checked_dblquad(lambda z2, z1: float(dist.rotated_block_density(z1, z2)),
                            lo1, upper1, lower2, hi2)


def _checked_dblquad(func, a, b, gfun, hfun) -> float:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", scipy.integrate.IntegrationWarning)
        value, error = scipy.integrate.dblquad(func, a, b, gfun, hfun,
                                               epsabs=QUADRATURE_TOLERANCE, epsrel=QUADRATURE_TOLERANCE)
    if any(issubclass(w.category, scipy.integrate.IntegrationWarning) for w in caught) and error > 1e-8:
        raise QuadratureError("Nested quadrature of the block density did not converge", error)
    return float(min(max(value, 0.0), 1.0))


def _as_points(dist: StepDistribution, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != dist.n:
        raise DimensionMismatchError(f"Expected points of dimension {dist.n}, got shape {x.shape}.")
    return x


def feasible_step_density(dist: StepDistribution, delta: float, x):
    """Density of M̃ at `x` (one point or an array of points)."""
    delta = _check_delta(delta)
    x = _as_points(dist, x)
    inside = dist.frame.constraint_values(x) <= delta
    value = np.where(inside, dist.density(x), 0.0) / mass_of_feasible_set(dist, delta)
    return float(value) if np.ndim(value) == 0 else value


def selected_step_density(dist: StepDistribution, problem: Problem, delta: float, x, lam: int | None = None):
    """Density of M⋆ at `x` (one point or an array of points).

    Args:
        dist (StepDistribution): Law of the raw step, bound to the problem frame.
        problem (Problem): Supplies λ.
        delta (float): Normalised distance.
        x: Point(s) of shape (..., n).
        lam (int | None): Overrides `problem.lam`; λ = 1 gives the feasible-step density.

    Returns:
        float or numpy.ndarray: The density values.
    """
    _check_bound(dist, problem)
    delta = _check_delta(delta)
    lam = problem.lam if lam is None else int(lam)
    if lam < 1:
        raise ValueError(f"lam must be at least 1, got {lam}.")
    x = _as_points(dist, x)
    flat = x.reshape(-1, dist.n)
    inside = dist.frame.constraint_values(flat) <= delta
    feasible_mass = mass_of_feasible_set(dist, delta)
    value = np.zeros(flat.shape[0])
    if np.any(inside):
        points = flat[inside]
        value[inside] = lam * dist.density(points) / feasible_mass
        if lam > 1:
            first, inverse = np.unique(points[:, 0], return_inverse=True)
            truncated = np.atleast_1d(mass_of_truncated_halfplane(dist, delta, first))
            value[inside] *= (truncated[inverse.ravel()] / feasible_mass) ** (lam - 1)
    value = value.reshape(x.shape[:-1])
    return float(value) if value.ndim == 0 else value


def integrate_rotated_block(fn, frame: RotationFrame, delta: float, half_width: float = 8.0, order: int = 64) -> float:
    """Integrates `fn` over {g(x) <= δ} ∩ box in R² by tensor Gauss–Legendre.

    The grid lives in the constraint frame, so the boundary of the feasible
    half-plane is a grid edge and the rule sees no discontinuity.

    Args:
        fn: Vectorised function of canonical points of shape (m, 2).
        frame (RotationFrame): Frame of the constraint; must be two-dimensional.
        delta (float): Normalised distance.
        half_width (float): Half-width of the box in each frame coordinate.
        order (int): Gauss–Legendre nodes per axis.

    Returns:
        float: The integral.
    """
    if frame.n != 2:
        raise DimensionMismatchError("integrate_rotated_block works on two-dimensional frames only.")
    upper = min(delta, half_width)
    if upper <= -half_width:
        return 0.0
    nodes, weights = np.polynomial.legendre.leggauss(order)
    z1 = 0.5 * (upper + half_width) * nodes + 0.5 * (upper - half_width)
    w1 = 0.5 * (upper + half_width) * weights
    z2 = half_width * nodes
    w2 = half_width * weights
    grid1, grid2 = np.meshgrid(z1, z2, indexing="ij")
    points = frame.from_frame(np.column_stack([grid1.ravel(), grid2.ravel()]))
    values = np.asarray(fn(points), dtype=np.float64).reshape(order, order)
    return float(w1 @ values @ w2)


def unconstrained_selected_mean(dist: StepDistribution, lam: int) -> float | None:
    """lim_{δ→∞} E[g(M⋆) | δ], or None when the law has no closed form for it."""
    return dist.unconstrained_selected_mean(lam)
