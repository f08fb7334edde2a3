"""
Recovery of Alice's pulse period and of the propagation offset from Bob's time tags.

Bob's clock runs slightly fast or slow. Folding the detection times modulo
the right period stacks every pulse on top of the others; with a wrong
period they smear out over the sequence. The period is found by minimizing
the inter-quantile range of the folded times, which ignores the uniform
dark and parasitic counts.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .events import NO_PULSE
from .events import OUTSIDE
from .events import DetectionRecords
from .exceptions import InsufficientStatisticsError
from .simulate import ProtocolParams
from .units import NS

logger = logging.getLogger(__name__)

MIN_RECORDS = 100


@dataclass(frozen=True)
class AlignmentSearch:
    relative_span: float = 2e-4
    steps: int = 41
    quantile: float = 0.01
    offset_hint: float = 120 * NS
    tolerance: float = 1e-12
    # folded-time center of the detections in Alice's frame; None uses the
    # midpoint between the bit-0 and bit-1 pulse centers
    expected_center: Optional[float] = None


@dataclass(frozen=True)
class AlignmentResult:
    """
    Recovered period and offset, both on Bob's clock.

    ``spread`` is the inter-quantile range of the folded times at the
    recovered period. ``drift`` is how far the last record would have slipped
    if Bob had folded with the nominal period instead.
    """

    period: float
    offset: float
    spread: float
    drift: float
    span: float
    nominal_period: float

    @property
    def scale(self) -> float:
        return self.period / self.nominal_period

    def residual_drift(self, true_period: float) -> float:
        """Slip accumulated over the record span against a known true period."""
        return abs(self.period / true_period - 1) * self.span


def _fold(times: np.ndarray, period: float):
    phase = np.mod(times, period)
    angle = 2 * math.pi * phase / period
    center = (np.angle(np.mean(np.exp(1j * angle))) / (2 * math.pi)) * period
    centered = np.mod(phase - center + period / 2, period) - period / 2
    return centered, center


def fold_spread(times: np.ndarray, period: float, quantile: float) -> float:
    """Inter-quantile range of the times folded modulo ``period``."""
    centered, _ = _fold(times, period)
    lo, hi = np.quantile(centered, [quantile, 1 - quantile])
    return float(hi - lo)


def align_clock(
    records: DetectionRecords,
    params: ProtocolParams,
    search: AlignmentSearch | None = None,
) -> AlignmentResult:
    """
    Find the pulse period and offset on Bob's clock.

    A coarse grid over +-relative_span around the nominal period picks a
    bracket, then a golden-section search refines the period. The offset is
    the median folded time minus the expected pulse center, taken on the
    period branch closest to ``offset_hint``.

    Args:
        records: Detection records of one or more sequences
        params: Protocol parameters
        search: Search settings

    Returns:
        AlignmentResult

    Raises:
        InsufficientStatisticsError: If fewer than 100 records are available
    """
    search = search or AlignmentSearch()
    if len(records) < MIN_RECORDS:
        raise InsufficientStatisticsError(f"clock alignment needs at least {MIN_RECORDS} records (got {len(records)})")

    times = records.raw_time
    nominal = params.grid.period
    candidates = nominal * (1 + np.linspace(-search.relative_span, search.relative_span, search.steps))
    spreads = np.array([fold_spread(times, p, search.quantile) for p in candidates])
    best = int(np.argmin(spreads))

    def objective(period: float) -> float:
        return fold_spread(times, period, search.quantile)

    if best in (0, candidates.size - 1):
        logger.warning(f"clock alignment minimum at the edge of the search range ({candidates[best] / NS:.6f} ns)")
        lo = candidates[max(best - 1, 0)]
        hi = candidates[min(best + 1, candidates.size - 1)]
        refined = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": nominal * search.tolerance})
    else:
        bracket = (candidates[best - 1], candidates[best], candidates[best + 1])
        try:
            refined = minimize_scalar(objective, bracket=bracket, method="golden", tol=search.tolerance)
        except ValueError:
            # flat objective at the coarse minimum, no valid bracket
            refined = minimize_scalar(
                objective,
                bounds=(bracket[0], bracket[2]),
                method="bounded",
                options={"xatol": nominal * search.tolerance},
            )
    period = float(refined.x)
    if objective(period) > spreads[best]:
        period = float(candidates[best])

    centered, center = _fold(times, period)
    lo, hi = np.quantile(centered, [search.quantile, 1 - search.quantile])
    grid = params.grid
    expected = search.expected_center
    if expected is None:
        expected = (grid.pulse_center(0) + grid.pulse_center(1)) / 2
    scale = period / nominal
    phase_offset = center + float(np.median(centered)) - expected * scale
    branch = round((search.offset_hint * scale - phase_offset) / period)
    offset = phase_offset + branch * period

    span = float(np.max(times) - np.min(times))
    result = AlignmentResult(
        period=period,
        offset=offset,
        spread=float(hi - lo),
        drift=abs(scale - 1) * span,
        span=span,
        nominal_period=nominal,
    )
    logger.info(
        f"Aligned clock: period {period / NS:.9f} ns (skew {scale - 1:+.3e}), "
        f"offset {offset / NS:.3f} ns, spread {result.spread / NS:.3f} ns",
    )
    return result


def assign_slots(records: DetectionRecords, alignment: AlignmentResult, params: ProtocolParams) -> DetectionRecords:
    """
    Attach pulse index and slot to every record.

    Bob's times are brought back to Alice's frame with the recovered offset
    and period. Records before the first or after the last pulse get no pulse
    index and the ``outside`` slot.
    """
    grid = params.grid
    aligned = (records.raw_time - alignment.offset) / alignment.scale
    pulse = np.floor(aligned / grid.period).astype(np.int64)
    within = aligned - pulse * grid.period
    slot = grid.slots_of(within)
    valid = (pulse >= 0) & (pulse < params.pulses_per_sequence)
    pulse = np.where(valid, pulse, NO_PULSE)
    slot = np.where(valid, slot, OUTSIDE)
    return records.with_assignment(pulse, slot)
