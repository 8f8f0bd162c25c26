"""Moving-block bootstrap confidence intervals for means of autocorrelated series."""
import logging
import math

import numpy as np
from pydantic import BaseModel

logger = logging.getLogger(__name__)

DEFAULT_RESAMPLES = 1000
DEFAULT_CONFIDENCE = 0.95


class ConfidenceInterval(BaseModel):
    """A point estimate with a bootstrap percentile interval.

    Attributes:
        estimate (float): The sample mean.
        lower (float): Lower end of the interval.
        upper (float): Upper end of the interval.
        confidence (float): Nominal coverage.
        block_length (int): Length of the resampled blocks.
        resamples (int): Number of bootstrap resamples.
    """
    estimate: float
    lower: float
    upper: float
    confidence: float = DEFAULT_CONFIDENCE
    block_length: int = 1
    resamples: int = DEFAULT_RESAMPLES

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def excludes_zero(self) -> bool:
        return self.lower > 0.0 or self.upper < 0.0

    def overlaps(self, other: 'ConfidenceInterval') -> bool:
        return self.lower <= other.upper and other.lower <= self.upper

    def scaled(self, factor: float) -> 'ConfidenceInterval':
        """The interval of `factor` times the mean (`factor` > 0)."""
        return self.model_copy(update={"estimate": factor * self.estimate,
                                       "lower": factor * self.lower,
                                       "upper": factor * self.upper})


def default_block_length(length: int) -> int:
    """⌈√length⌉."""
    return max(1, math.ceil(math.sqrt(length)))


def moving_block_bootstrap_mean(series,
                                rng: np.random.Generator,
                                block_length: int | None = None,
                                resamples: int = DEFAULT_RESAMPLES,
                                confidence: float = DEFAULT_CONFIDENCE) -> ConfidenceInterval:
    """Percentile interval for the mean of one or more autocorrelated series.

    Each series (one per chain replica) is resampled on its own by
    concatenating ⌈N/b⌉ overlapping blocks of length b drawn with uniform
    start positions; the resampled mean pools all series. Blocks are summed
    through prefix sums, so a resample costs O(number of blocks).

    Args:
        series: A 1-D array or a list of 1-D arrays.
        rng (numpy.random.Generator): Stream for the block starts.
        block_length (int | None): b; ⌈√N⌉ of the shortest series when omitted.
        resamples (int): Number of resamples.
        confidence (float): Coverage of the percentile interval.

    Returns:
        ConfidenceInterval: Mean and interval. The interval always contains the mean.

    Raises:
        ValueError: For empty series or a block longer than a series.
    """
    if isinstance(series, np.ndarray) and series.ndim == 1:
        series = [series]
    series = [np.asarray(s, dtype=np.float64) for s in series]
    if not series or any(s.size == 0 for s in series):
        raise ValueError("Bootstrap needs non-empty series.")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence!r}.")
    shortest = min(s.size for s in series)
    block = default_block_length(shortest) if block_length is None else int(block_length)
    if not 1 <= block <= shortest:
        raise ValueError(f"Block length must be in [1, {shortest}], got {block}.")

    total_length = sum(s.size for s in series)
    estimate = float(sum(np.sum(s) for s in series) / total_length)

    totals = np.zeros(resamples)
    counts = 0
    for s in series:
        prefix = np.concatenate(([0.0], np.cumsum(s)))
        block_sums = prefix[block:] - prefix[:-block]
        blocks = math.ceil(s.size / block)
        starts = rng.integers(0, block_sums.size, size=(resamples, blocks))
        totals += block_sums[starts].sum(axis=1)
        counts += blocks * block
    means = totals / counts

    tail = 50.0 * (1.0 - confidence)
    lower, upper = np.percentile(means, [tail, 100.0 - tail])
    logger.debug(f"Block bootstrap: mean={estimate!r}, block={block}, interval=({lower!r}, {upper!r})")
    return ConfidenceInterval(estimate=estimate,
                              lower=min(float(lower), estimate),
                              upper=max(float(upper), estimate),
                              confidence=confidence,
                              block_length=block,
                              resamples=resamples)
