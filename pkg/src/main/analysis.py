"""Experiments on the normalised-distance chain δ_t and on the step kernel.

This module contains:
- Chain runs: `simulate_chains`, `summarize_chains` and `run_delta_chain`
  produce a `RunReport` (divergence rate, stationary statistics of δ, the
  stationarity residual E[g(M⋆)], resampling statistics).
- `diagnose_conditions`: Monte Carlo estimates of the moment and limit
  conditions under which the chain is geometrically ergodic.
- `covariance_equivalence_transform` and `verify_covariance_equivalence`: a
  Gaussian ES with covariance C at angle θ is a coordinate-wise rescaling of
  an ES with covariance diag(β) C diag(β) at a transformed angle θ′.
- `isotropy_positivity_check`, `selected_step_goodness_of_fit`,
  `copula_path_equivalence` and `split_half_consistency`.

Every check reports flags instead of raising.
"""
import concurrent.futures
import dataclasses
import logging
import math

import numpy as np
import scipy.stats
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import copula_path
from .bootstrap import ConfidenceInterval, moving_block_bootstrap_mean
from .commons import (STREAM_KEY_BOOTSTRAP, STREAM_KEY_DIAGNOSTICS, STREAM_KEY_REPLICA, STREAM_KEY_TRANSFORMED,
                      make_rng)
from .dist import GaussianStepDistribution, StepDistribution, StepStream, gaussian_step_distribution
from .es_core import ESState, es_iterate, integrate_rotated_block, sample_selected_steps, selected_step_density
from .problem import Problem, RotationFrame

logger = logging.getLogger(__name__)

DELTA_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
MOMENT_BASE_SAMPLES = 2048
MOMENT_DOUBLINGS = 10
MOMENT_SPREAD = 0.05
LIMIT_Z_THRESHOLD = 4.0
NORMAL_95 = 1.959963984540054


class ChainRunConfig(BaseModel):
    """Length, replication and seeding of a chain experiment.

    Attributes:
        burn_in (int): Iterations discarded before averaging.
        steps (int): Iterations per replica, burn-in included.
        replicas (int): Independent chains.
        seed (int): 64-bit user seed.
        delta0 (float): Initial normalised distance.
        thinning (int): Every `thinning`-th iteration is written to the trace file.
        workers (int): Threads running replicas concurrently.
        progress_every (int): Iterations between progress log lines.
    """
    model_config = ConfigDict(extra='forbid')

    burn_in: int = Field(default=10_000, ge=0)
    steps: int = Field(default=100_000, gt=0)
    replicas: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    delta0: float = Field(default=1.0, ge=0.0)
    thinning: int = Field(default=1, ge=1)
    workers: int = Field(default=1, ge=1)
    progress_every: int = Field(default=100_000, ge=1)

    @model_validator(mode='after')
    def _check_lengths(self) -> 'ChainRunConfig':
        if not self.steps > self.burn_in:
            raise ValueError(f"steps ({self.steps}) must exceed burn_in ({self.burn_in})")
        return self


@dataclasses.dataclass
class ChainTrace:
    """Recorded trajectory of one replica.

    Attributes:
        replica (int): Replica index.
        delta (numpy.ndarray): δ_t before iteration t, t = 0..steps-1.
        mstar (numpy.ndarray): First two coordinates of M⋆_t, shape (steps, 2).
        g_values (numpy.ndarray): g(M⋆_t) as used in the δ update.
        resamples (numpy.ndarray): Rejected candidates at iteration t.
        final_state (ESState): State after the last iteration.
    """
    replica: int
    delta: np.ndarray
    mstar: np.ndarray
    g_values: np.ndarray
    resamples: np.ndarray
    final_state: ESState


class DeltaSummary(BaseModel):
    """Post burn-in statistics of δ pooled over replicas."""
    mean: float
    variance: float
    quantiles: dict[str, float]


class ResampleStats(BaseModel):
    total: int
    mean_per_iteration: float
    max_per_iteration: int


class SplitHalfReport(BaseModel):
    """Divergence-rate estimates on the two halves of the post burn-in chain."""
    first_half: ConfidenceInterval
    second_half: ConfidenceInterval
    overlap: bool


class DiagnosticsRow(BaseModel):
    """Monte Carlo estimates at one δ.

    Attributes:
        delta (float): Normalised distance.
        mean_abs_g_feasible (float): E|g(M̃)|.
        mean_abs_g_feasible_stderr (float): Its standard error.
        mean_g_selected (float): E[g(M⋆) | δ].
        mean_g_selected_stderr (float): Its standard error.
        mean_mstar_2 (float): E[[M⋆]_2 | δ].
        mean_mstar_2_stderr (float): Its standard error.
    """
    delta: float
    mean_abs_g_feasible: float
    mean_abs_g_feasible_stderr: float
    mean_g_selected: float
    mean_g_selected_stderr: float
    mean_mstar_2: float
    mean_mstar_2_stderr: float


class ExpMomentCheck(BaseModel):
    """Running means of exp(g(M)) over raw steps at doubling sample sizes."""
    sample_sizes: list[int]
    running_means: list[float]
    divergent: bool


class AbsMomentCheck(BaseModel):
    """Running means of |g(M̃)| over feasible steps at one δ, at doubling sample sizes."""
    delta: float
    sample_sizes: list[int]
    running_means: list[float]
    divergent: bool


class DiagnosticsTable(BaseModel):
    """Result of `diagnose_conditions`.

    Attributes:
        rows (list[DiagnosticsRow]): One row per δ of the grid.
        exp_moment (ExpMomentCheck): The exponential-moment check on raw steps.
        abs_moments (list[AbsMomentCheck]): The first-moment check of |g(M̃)| per δ.
        analytic_limit (float | None): lim E[g(M⋆) | δ] when known in closed form.
        limit_z_score (float | None): (last row - limit) in standard errors.
        flags (list[str]): Names of the raised condition flags.
    """
    rows: list[DiagnosticsRow]
    exp_moment: ExpMomentCheck
    abs_moments: list[AbsMomentCheck] = Field(default_factory=list)
    analytic_limit: float | None = None
    limit_z_score: float | None = None
    flags: list[str] = Field(default_factory=list)

    @property
    def any_flag(self) -> bool:
        return bool(self.flags)


class RunReport(BaseModel):
    """Summary of a chain experiment.

    Attributes:
        problem (Problem): The ES setting.
        distribution (str): Description of the step law.
        config (ChainRunConfig): Run configuration.
        divergence_rate (ConfidenceInterval): σ times the time average of [M⋆]_1.
        stationary_delta (DeltaSummary): Statistics of δ after burn-in.
        stationarity_identity_residual (ConfidenceInterval): Time average of
            cos θ [M⋆]_1 + sin θ [M⋆]_2, zero under the stationary law.
        mean_mstar_2 (ConfidenceInterval): Time average of [M⋆]_2.
        resample_stats (ResampleStats): Rejections during the run.
        split_half (SplitHalfReport | None): Consistency of the two halves.
        condition_diagnostics (DiagnosticsTable | None): Present when requested.
    """
    problem: Problem
    distribution: str
    config: ChainRunConfig
    divergence_rate: ConfidenceInterval
    stationary_delta: DeltaSummary
    stationarity_identity_residual: ConfidenceInterval
    mean_mstar_2: ConfidenceInterval
    resample_stats: ResampleStats
    split_half: SplitHalfReport | None = None
    condition_diagnostics: DiagnosticsTable | None = None


def simulate_replica(problem: Problem, dist: StepDistribution, config: ChainRunConfig, replica: int) -> ChainTrace:
    """Runs one chain of `config.steps` iterations from δ_0 = `config.delta0`."""
    stream = StepStream(dist, make_rng(config.seed, STREAM_KEY_REPLICA, replica))
    state = ESState.initial(problem, config.delta0)
    steps = config.steps
    delta = np.empty(steps)
    mstar = np.empty((steps, 2))
    g_values = np.empty(steps)
    resamples = np.empty(steps, dtype=np.int64)
    for t in range(steps):
        delta[t] = state.delta
        state, selected = es_iterate(state, problem, dist, stream)
        mstar[t] = selected.vector[:2]
        g_values[t] = selected.g_value
        resamples[t] = selected.resamples
        if (t + 1) % config.progress_every == 0:
            logger.info(f"Replica {replica}: {t + 1}/{steps} iterations, delta={state.delta:.6g}")
    logger.info(f"Replica {replica} finished: {steps} iterations, {state.resample_count} resamples.")
    return ChainTrace(replica, delta, mstar, g_values, resamples, state)


def simulate_chains(problem: Problem, dist: StepDistribution, config: ChainRunConfig) -> list[ChainTrace]:
    """Runs all replicas, on `config.workers` threads; results are in replica order."""
    logger.info(f"Simulating {config.replicas} replica(s) of {config.steps} steps with {dist.describe()}")
    if config.workers == 1 or config.replicas == 1:
        return [simulate_replica(problem, dist, config, i) for i in range(config.replicas)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=config.workers) as executor:
        return list(executor.map(lambda i: simulate_replica(problem, dist, config, i), range(config.replicas)))


def _bootstrap(series: list[np.ndarray], seed: int, key: int) -> ConfidenceInterval:
    return moving_block_bootstrap_mean(series, make_rng(seed, STREAM_KEY_BOOTSTRAP, key))


def split_half_consistency(traces: list[ChainTrace], problem: Problem, config: ChainRunConfig) -> SplitHalfReport:
    """Divergence rate on each half of the post burn-in iterations.

    Both estimates converge to the same limit when the law of large numbers
    holds, so their intervals should overlap.
    """
    middle = config.burn_in + (config.steps - config.burn_in) // 2
    first = _bootstrap([t.mstar[config.burn_in:middle, 0] for t in traces], config.seed, 3)
    second = _bootstrap([t.mstar[middle:, 0] for t in traces], config.seed, 4)
    first = first.scaled(problem.sigma)
    second = second.scaled(problem.sigma)
    return SplitHalfReport(first_half=first, second_half=second, overlap=first.overlaps(second))


def summarize_chains(problem: Problem, dist: StepDistribution, config: ChainRunConfig,
                     traces: list[ChainTrace]) -> RunReport:
    """Builds the `RunReport` of simulated replicas."""
    burn = config.burn_in
    frame = problem.frame
    rate = _bootstrap([t.mstar[burn:, 0] for t in traces], config.seed, 0).scaled(problem.sigma)
    residual = _bootstrap([frame.cos_theta * t.mstar[burn:, 0] + frame.sin_theta * t.mstar[burn:, 1]
                           for t in traces], config.seed, 1)
    mstar_2 = _bootstrap([t.mstar[burn:, 1] for t in traces], config.seed, 2)

    deltas = np.concatenate([t.delta[burn:] for t in traces])
    quantiles = np.quantile(deltas, DELTA_QUANTILES)
    stationary = DeltaSummary(mean=float(np.mean(deltas)),
                              variance=float(np.var(deltas)),
                              quantiles={f"{q:g}": float(v) for q, v in zip(DELTA_QUANTILES, quantiles)})
    resamples = np.concatenate([t.resamples for t in traces])
    resample_stats = ResampleStats(total=int(resamples.sum()),
                                   mean_per_iteration=float(resamples.mean()),
                                   max_per_iteration=int(resamples.max()))
    report = RunReport(problem=problem,
                       distribution=dist.describe(),
                       config=config,
                       divergence_rate=rate,
                       stationary_delta=stationary,
                       stationarity_identity_residual=residual,
                       mean_mstar_2=mstar_2,
                       resample_stats=resample_stats,
                       split_half=split_half_consistency(traces, problem, config))
    logger.info(f"Divergence rate {rate.estimate:.6g} in [{rate.lower:.6g}, {rate.upper:.6g}]; "
                f"stationarity residual {residual.estimate:.3g} in [{residual.lower:.3g}, {residual.upper:.3g}]")
    return report


def run_delta_chain(problem: Problem, dist: StepDistribution, config: ChainRunConfig) -> RunReport:
    """Simulates the ES and summarises the δ chain.

    The divergence rate is σ times the post burn-in time average of [M⋆]_1,
    with a moving-block bootstrap interval (block ⌈√N⌉, 1000 resamples).

    Args:
        problem (Problem): The ES setting.
        dist (StepDistribution): The step law, bound to the problem frame.
        config (ChainRunConfig): Run configuration.

    Returns:
        RunReport: The summary. Identical inputs give an identical report.

    Raises:
        ResampleCapError: Propagated from the ES iteration.
    """
    return summarize_chains(problem, dist, config, simulate_chains(problem, dist, config))


def _mean_and_stderr(values: np.ndarray) -> tuple[float, float]:
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size))


def _doubling_running_means(take, base: int, doublings: int) -> tuple[list[int], list[float], bool]:
    """Running means of the values returned by `take(count)` at N_0, 2 N_0, ..., 2^doublings N_0.

    The mean is declared divergent when it is not finite or when its relative
    spread over the second half of the checkpoints exceeds `MOMENT_SPREAD`.
    """
    sizes = [base * 2**k for k in range(doublings + 1)]
    total = 0.0
    drawn = 0
    means = []
    for size in sizes:
        total += float(np.sum(take(size - drawn)))
        drawn = size
        means.append(total / drawn)
    tail = np.array(means[len(means) // 2:])
    if not np.all(np.isfinite(tail)):
        return sizes, means, True
    return sizes, means, bool((tail.max() - tail.min()) > MOMENT_SPREAD * abs(tail.mean()))


def exp_moment_check(dist: StepDistribution, rng: np.random.Generator,
                     base: int = MOMENT_BASE_SAMPLES, doublings: int = MOMENT_DOUBLINGS) -> ExpMomentCheck:
    """Checks whether E[exp(g(M))] looks finite, on raw steps."""
    stream = StepStream(dist, rng, block_size=base)

    def take(count: int) -> np.ndarray:
        with np.errstate(over='ignore'):
            return np.exp(dist.frame.constraint_values(stream.take_raw(count)))

    sizes, means, divergent = _doubling_running_means(take, base, doublings)
    return ExpMomentCheck(sample_sizes=sizes, running_means=means, divergent=divergent)


def abs_moment_check(stream: StepStream, delta: float,
                     base: int = MOMENT_BASE_SAMPLES, doublings: int = MOMENT_DOUBLINGS) -> AbsMomentCheck:
    """Checks whether E|g(M̃)| looks finite for feasible steps at `delta`."""
    sizes, means, divergent = _doubling_running_means(lambda count: np.abs(stream.take_feasible(count, delta)[1]),
                                                      base, doublings)
    return AbsMomentCheck(delta=float(delta), sample_sizes=sizes, running_means=means, divergent=divergent)


def diagnose_conditions(problem: Problem, dist: StepDistribution, delta_grid, samples_per_delta: int,
                        rng: np.random.Generator,
                        moment_base: int = MOMENT_BASE_SAMPLES,
                        moment_doublings: int = MOMENT_DOUBLINGS) -> DiagnosticsTable:
    """Monte Carlo estimates of the ergodicity conditions on a δ grid.

    Per δ: E|g(M̃)| over feasible steps, with a doubling-sample check that
    its running mean settles, and E[g(M⋆) | δ] and E[[M⋆]_2 | δ] over
    selected steps. Once: the exponential moment E[exp(g(M))] of the raw step.
    The last grid point is compared with the closed-form limit of E[g(M⋆) | δ]
    as δ grows when the law provides one, otherwise with the previous grid
    point.

    Args:
        problem (Problem): The ES setting.
        dist (StepDistribution): The step law, bound to the problem frame.
        delta_grid: Increasing non-negative δ values.
        samples_per_delta (int): Samples per grid point and per estimate.
        rng (numpy.random.Generator): Caller-owned stream.
        moment_base (int): First checkpoint of the moment checks.
        moment_doublings (int): Number of doublings of the moment checks.

    Returns:
        DiagnosticsTable: Rows and flags; nothing is raised for failed conditions.
    """
    grid = [float(d) for d in delta_grid]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 0:
        raise ValueError(f"delta_grid must be increasing and non-negative, got {grid}.")
    frame = dist.frame
    stream = StepStream(dist, rng)
    rows = []
    abs_moments = []
    for delta in grid:
        _, g_feasible, _ = stream.take_feasible(samples_per_delta, delta)
        abs_moments.append(abs_moment_check(stream, delta, moment_base, moment_doublings))
        abs_mean, abs_err = _mean_and_stderr(np.abs(g_feasible))
        selected = sample_selected_steps(dist, problem, delta, samples_per_delta, stream)
        g_mean, g_err = _mean_and_stderr(frame.constraint_values(selected))
        m2_mean, m2_err = _mean_and_stderr(selected[:, 1])
        rows.append(DiagnosticsRow(delta=delta,
                                   mean_abs_g_feasible=abs_mean, mean_abs_g_feasible_stderr=abs_err,
                                   mean_g_selected=g_mean, mean_g_selected_stderr=g_err,
                                   mean_mstar_2=m2_mean, mean_mstar_2_stderr=m2_err))
        logger.debug(f"delta={delta}: E|g(M~)|={abs_mean:.6g}, E[g(M*)]={g_mean:.6g}, E[M*_2]={m2_mean:.6g}")

    exp_moment = exp_moment_check(dist, stream.rng, moment_base, moment_doublings)
    flags = []
    if exp_moment.divergent:
        flags.append("exp_moment_divergent")
    if any(check.divergent for check in abs_moments):
        flags.append("abs_moment_not_finite")

    limit = dist.unconstrained_selected_mean(problem.lam)
    last = rows[-1]
    z_score = None
    if limit is not None:
        z_score = (last.mean_g_selected - limit) / last.mean_g_selected_stderr
    elif len(rows) > 1:
        previous = rows[-2]
        spread = math.hypot(last.mean_g_selected_stderr, previous.mean_g_selected_stderr)
        z_score = (last.mean_g_selected - previous.mean_g_selected) / spread
    if z_score is not None and not abs(z_score) <= LIMIT_Z_THRESHOLD:
        flags.append("selected_mean_not_converging")
    if flags:
        logger.warning(f"Condition flags raised for {dist.describe()}: {', '.join(flags)}")
    return DiagnosticsTable(rows=rows, exp_moment=exp_moment, abs_moments=abs_moments, analytic_limit=limit,
                            limit_z_score=z_score, flags=flags)


class CovarianceTransform(BaseModel):
    """Parameters of the equivalent rescaled ES.

    Attributes:
        theta_prime (float): Angle of the transformed constraint.
        x0_prime (list[float]): Rescaled start point β ∘ x0.
        scaling (list[float]): β_k = sqrt((C⁻¹)_kk).
        transformed_covariance (list[list[float]]): diag(β) C diag(β).
    """
    theta_prime: float
    x0_prime: list[float]
    scaling: list[float]
    transformed_covariance: list[list[float]]


def covariance_equivalence_transform(dist: StepDistribution | None, covariance, theta: float, x0) -> CovarianceTransform:
    """Maps an ES with step covariance C at angle θ to an equivalent rescaled ES.

    With C = B diag(α²) Bᵀ, β_k = sqrt(Σ_j b_kj² / α_j²) = sqrt((C⁻¹)_kk).
    Scaling coordinate k by β_k keeps the objective order, turns the
    constraint into one at angle θ′ with cos θ′ ∝ cos θ / β_1 and
    sin θ′ ∝ sin θ / β_2, and gives the steps covariance diag(β) C diag(β),
    the identity when C is diagonal.

    θ′ is read off the gradient of the rescaled constraint, which is ∇g divided
    coordinate-wise by β. An arccos of diag(β)∇g against diag(β)∇f scales the
    gradient the wrong way (1.10715 instead of 0.46365 for diag(4, 1) at π/4)
    and fails the simulation check in `verify_covariance_equivalence`.

    Args:
        dist (StepDistribution | None): When given, its dimension must match.
        covariance: SPD matrix C.
        theta (float): Original angle.
        x0: Original start point.

    Returns:
        CovarianceTransform: θ′, β ∘ x0, β and the transformed covariance.

    Raises:
        ValueError: If C is not symmetric positive definite.
    """
    covariance = np.asarray(covariance, dtype=np.float64)
    n = covariance.shape[0]
    if covariance.shape != (n, n) or not np.allclose(covariance, covariance.T, rtol=0.0, atol=1e-12):
        raise ValueError("Covariance must be a symmetric square matrix.")
    if dist is not None and dist.n != n:
        raise ValueError(f"Covariance dimension {n} differs from the distribution dimension {dist.n}.")
    eigenvalues, basis = np.linalg.eigh(covariance)
    if not np.all(eigenvalues > 0):
        raise ValueError("Covariance must be positive definite.")
    beta = np.sqrt(np.sum(basis**2 / eigenvalues[None, :], axis=1))
    theta_prime = math.atan2(math.sin(theta) / beta[1], math.cos(theta) / beta[0])
    x0_prime = beta * np.asarray(x0, dtype=np.float64)
    transformed = beta[:, None] * covariance * beta[None, :]
    return CovarianceTransform(theta_prime=theta_prime, x0_prime=x0_prime.tolist(), scaling=beta.tolist(),
                               transformed_covariance=(0.5 * (transformed + transformed.T)).tolist())


class KSComparison(BaseModel):
    """A two-sample Kolmogorov–Smirnov comparison."""
    label: str
    statistic: float
    pvalue: float
    passed: bool


class EquivalenceReport(BaseModel):
    """Outcome of `verify_covariance_equivalence`."""
    transform: CovarianceTransform
    theta_used: float
    common_random_numbers: bool
    comparisons: list[KSComparison]
    passed: bool


def _run_positions(problem: Problem, dist: StepDistribution, x0: np.ndarray, checkpoints: list[int],
                   rng: np.random.Generator) -> np.ndarray:
    stream = StepStream(dist, rng)
    state = ESState(parent=x0.copy(), delta=-float(problem.frame.constraint_values(x0)) / problem.sigma)
    positions = np.empty((len(checkpoints), problem.n))
    index = 0
    for t in range(1, checkpoints[-1] + 1):
        state, _ = es_iterate(state, problem, dist, stream)
        if t == checkpoints[index]:
            positions[index] = state.parent
            index += 1
    return positions


def verify_covariance_equivalence(dist: GaussianStepDistribution,
                                  covariance,
                                  theta: float,
                                  steps: int,
                                  rng: np.random.Generator,
                                  lam: int = 5,
                                  sigma: float = 1.0,
                                  delta0: float = 1.0,
                                  replicas: int = 200,
                                  checkpoints=(10, 100, 1000),
                                  theta_prime_override: float | None = None,
                                  common_random_numbers: bool = True,
                                  alpha: float = 0.01) -> EquivalenceReport:
    """Runs the original and the rescaled ES and compares their positions.

    For every replica the original ES (law of `dist`, angle θ, start
    -σ δ_0 ∇g) and the transformed ES (covariance diag(β) C diag(β), angle θ′,
    start β ∘ x0) run side by side. At each checkpoint the law of β_k [X_t]_k
    is compared with that of [X′_t]_k, k = 1, 2, by a two-sample KS test.
    With common random numbers both runs consume the same normal draws, which
    couples them pathwise when the transform is correct.

    Args:
        dist (GaussianStepDistribution): The original law, bound to angle `theta`.
        covariance: Its covariance C.
        theta (float): Original angle.
        steps (int): Iterations; checkpoints beyond it are dropped.
        rng (numpy.random.Generator): Supplies the per-replica seeds.
        lam, sigma, delta0: ES setting shared by both runs.
        replicas (int): Independent replica pairs.
        checkpoints: Iterations at which positions are compared.
        theta_prime_override (float | None): Use this angle instead of θ′
            (negative control).
        common_random_numbers (bool): Share the random stream between the runs.
        alpha (float): Significance level of each KS test.

    Returns:
        EquivalenceReport: Per checkpoint and coordinate KS results.
    """
    if not isinstance(dist, GaussianStepDistribution):
        raise ValueError("The covariance equivalence is verified for Gaussian step laws.")
    checkpoints = sorted(t for t in checkpoints if t <= steps)
    if not checkpoints:
        raise ValueError(f"No checkpoint is within {steps} steps.")
    problem = Problem(n=dist.n, lam=lam, theta=theta, sigma=sigma)
    if dist.frame.theta != theta:
        dist = gaussian_step_distribution(dist.n, covariance, problem.frame)
    x0 = problem.start_point(delta0)
    transform = covariance_equivalence_transform(dist, covariance, theta, x0)
    theta_used = transform.theta_prime if theta_prime_override is None else float(theta_prime_override)
    transformed_problem = Problem(n=dist.n, lam=lam, theta=theta_used, sigma=sigma)
    transformed_dist = gaussian_step_distribution(dist.n, transform.transformed_covariance,
                                                  RotationFrame(theta_used, dist.n))
    beta = np.asarray(transform.scaling)
    x0_prime = np.asarray(transform.x0_prime)

    seeds = rng.integers(0, 2**63, size=replicas)
    original = np.empty((replicas, len(checkpoints), dist.n))
    rescaled = np.empty((replicas, len(checkpoints), dist.n))
    for i, seed in enumerate(seeds):
        original[i] = _run_positions(problem, dist, x0, checkpoints, make_rng(int(seed)))
        key = () if common_random_numbers else (STREAM_KEY_TRANSFORMED,)
        rescaled[i] = _run_positions(transformed_problem, transformed_dist, x0_prime, checkpoints,
                                     make_rng(int(seed), *key))
    original *= beta[None, None, :]

    comparisons = []
    for c, t in enumerate(checkpoints):
        for k in range(2):
            result = scipy.stats.ks_2samp(original[:, c, k], rescaled[:, c, k])
            comparisons.append(KSComparison(label=f"t={t} coordinate {k + 1}", statistic=float(result.statistic),
                                            pvalue=float(result.pvalue), passed=bool(result.pvalue > alpha)))
    passed = all(c.passed for c in comparisons)
    logger.info(f"Covariance equivalence with theta'={theta_used:.6g}: {'passed' if passed else 'failed'}")
    return EquivalenceReport(transform=transform, theta_used=theta_used, common_random_numbers=common_random_numbers,
                             comparisons=comparisons, passed=passed)


class ConditionalMean(BaseModel):
    delta: float
    mean: float
    stderr: float
    lower: float
    upper: float


class IsotropyReport(BaseModel):
    """Outcome of `isotropy_positivity_check`.

    Attributes:
        declared (bool): Whether the law is declared isotropic after whitening.
        note (str): Why the check was or was not run.
        conditional_mstar_2 (list[ConditionalMean]): E[[M⋆]_2 | δ] with normal 95% intervals.
        all_negative (bool): Every conditional interval lies below zero.
        divergence_rate (ConfidenceInterval | None): Stationary rate of a chain run.
        rate_positive (bool): The rate interval lies above zero.
    """
    declared: bool
    note: str
    conditional_mstar_2: list[ConditionalMean] = Field(default_factory=list)
    all_negative: bool = False
    divergence_rate: ConfidenceInterval | None = None
    rate_positive: bool = False


def isotropy_positivity_check(dist: StepDistribution, problem: Problem, config: ChainRunConfig,
                              delta_grid=(0.5, 1.0, 2.0), samples: int = 100_000) -> IsotropyReport:
    """For a law isotropic after whitening, checks E[[M⋆]_2 | δ] < 0 and a positive rate.

    Laws that do not declare the property are reported, not simulated.
    """
    if not dist.isotropic_after_whitening:
        logger.warning(f"{dist.describe()} is not declared isotropic after whitening; check skipped.")
        return IsotropyReport(declared=False, note="hypothesis not declared")
    stream = StepStream(dist, make_rng(config.seed, STREAM_KEY_DIAGNOSTICS))
    rows = []
    for delta in delta_grid:
        selected = sample_selected_steps(dist, problem, delta, samples, stream)
        mean, err = _mean_and_stderr(selected[:, 1])
        rows.append(ConditionalMean(delta=float(delta), mean=mean, stderr=err,
                                    lower=mean - NORMAL_95 * err, upper=mean + NORMAL_95 * err))
    rate = run_delta_chain(problem, dist, config).divergence_rate
    return IsotropyReport(declared=True, note="isotropic after whitening",
                          conditional_mstar_2=rows, all_negative=all(r.upper < 0 for r in rows),
                          divergence_rate=rate, rate_positive=rate.lower > 0)


class GoodnessOfFit(BaseModel):
    """Chi-square comparison of sampled selected steps with the exact density."""
    statistic: float
    pvalue: float
    categories: int


def _cell_probabilities(dist: StepDistribution, problem: Problem, delta: float,
                        edges1: np.ndarray, edges2: np.ndarray, order: int) -> np.ndarray:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    centers1 = 0.5 * (edges1[1:] + edges1[:-1])
    halves1 = 0.5 * (edges1[1:] - edges1[:-1])
    centers2 = 0.5 * (edges2[1:] + edges2[:-1])
    halves2 = 0.5 * (edges2[1:] - edges2[:-1])
    z1 = (centers1[:, None] + halves1[:, None] * nodes[None, :]).ravel()
    z2 = (centers2[:, None] + halves2[:, None] * nodes[None, :]).ravel()
    w1 = (halves1[:, None] * weights[None, :]).ravel()
    w2 = (halves2[:, None] * weights[None, :]).ravel()
    grid1, grid2 = np.meshgrid(z1, z2, indexing="ij")
    frame_points = np.zeros((grid1.size, dist.n))
    frame_points[:, 0] = grid1.ravel()
    frame_points[:, 1] = grid2.ravel()
    density = selected_step_density(dist, problem, delta, dist.frame.from_frame(frame_points))
    weighted = (w1[:, None] * w2[None, :]) * density.reshape(grid1.shape)
    cells1, cells2 = len(edges1) - 1, len(edges2) - 1
    return weighted.reshape(cells1, order, cells2, order).sum(axis=(1, 3))


def selected_step_goodness_of_fit(problem: Problem, dist: StepDistribution, delta: float, samples: int,
                                  rng: np.random.Generator, bins: int = 10, min_expected: float = 20.0,
                                  order: int = 16) -> GoodnessOfFit:
    """Chi-square test of sampled M⋆ against the exact selected-step density (n = 2).

    Cells are rectangles in the constraint frame with edges at the quantiles
    of an independent pilot sample; their probabilities are integrated with
    Gauss–Legendre rules. Cells expecting fewer than `min_expected` counts and
    the mass outside the grid are pooled into one category.
    """
    if dist.n != 2:
        raise ValueError("The goodness-of-fit grid is two-dimensional.")
    pilot = dist.frame.to_frame(sample_selected_steps(dist, problem, delta, min(samples, 20_000), rng))
    (lo1, _), (lo2, hi2) = dist.rotated_box()
    inner = np.linspace(0.0, 1.0, bins + 1)[1:-1]
    edges1 = np.concatenate(([lo1], np.quantile(pilot[:, 0], inner), [delta]))
    edges2 = np.concatenate(([lo2], np.quantile(pilot[:, 1], inner), [hi2]))
    probabilities = _cell_probabilities(dist, problem, delta, edges1, edges2, order).ravel()

    sample = dist.frame.to_frame(sample_selected_steps(dist, problem, delta, samples, rng))
    counts, _, _ = np.histogram2d(sample[:, 0], sample[:, 1], bins=[edges1, edges2])
    counts = counts.ravel()
    expected = samples * probabilities
    keep = expected >= min_expected
    observed = np.append(counts[keep], samples - counts[keep].sum())
    expected_kept = expected[keep]
    pooled = max(samples - expected_kept.sum(), 0.0)
    expected_all = np.append(expected_kept, pooled)
    expected_all *= samples / expected_all.sum()
    if expected_all[-1] < min_expected:
        observed = np.append(observed[:-2], observed[-2:].sum())
        expected_all = np.append(expected_all[:-2], expected_all[-2:].sum())
    result = scipy.stats.chisquare(observed, expected_all)
    logger.debug(f"Selected-step chi-square at delta={delta}: {result.statistic:.4g}, p={result.pvalue:.4g}")
    return GoodnessOfFit(statistic=float(result.statistic), pvalue=float(result.pvalue), categories=observed.size)


class CopulaPathReport(BaseModel):
    """KS comparisons between the copula construction and resampling."""
    feasible: list[KSComparison]
    selected: list[KSComparison]
    passed: bool


def copula_path_equivalence(problem: Problem, dist: StepDistribution, delta: float, samples: int,
                            rng: np.random.Generator, alpha: float = 0.01) -> CopulaPathReport:
    """Compares G(δ, ·) with resampled feasible steps and G⋆(δ, ·) with selected steps.

    Each comparison is a two-sample KS test per frame coordinate 1 and 2.
    """
    frame = dist.frame
    stream = StepStream(dist, rng)
    marginals = copula_path.build_truncated_marginals(dist, delta)

    direct_feasible, _, _ = stream.take_feasible(samples, delta)
    mapped = copula_path.map_G(delta, copula_path.sample_copula_uniforms(dist, rng, samples), marginals, frame)
    direct_selected = sample_selected_steps(dist, problem, delta, samples, stream)
    mapped_selected = copula_path.sample_selected_steps_by_copula(dist, problem.lam, delta, samples, rng)

    def compare(label, a, b):
        a = frame.to_frame(a)
        b = frame.to_frame(b)
        results = []
        for k in range(2):
            result = scipy.stats.ks_2samp(a[:, k], b[:, k])
            results.append(KSComparison(label=f"{label} coordinate {k + 1}", statistic=float(result.statistic),
                                        pvalue=float(result.pvalue), passed=bool(result.pvalue > alpha)))
        return results

    feasible = compare("feasible", direct_feasible, mapped)
    selected = compare("selected", direct_selected, mapped_selected)
    return CopulaPathReport(feasible=feasible, selected=selected,
                            passed=all(c.passed for c in feasible + selected))


def selected_density_normalization(problem: Problem, dist: StepDistribution, delta: float,
                                   half_width: float = 8.0, order: int = 64) -> float:
    """Integral of the selected-step density over the plane (n = 2)."""
    return integrate_rotated_block(lambda x: selected_step_density(dist, problem, delta, x),
                                   dist.frame, delta, half_width, order)
