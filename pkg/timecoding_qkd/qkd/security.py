"""
Security diagram: I_AB against I_AE, maximum tolerable QBER and secure range.

Alice and Bob can distil a key as long as Bob knows more about Alice's bits
than Eve does, I_AB > I_AE. Bob's information is that of a binary symmetric
channel with error rate Q; Eve's depends on the attack and on the coherence
loss Bob tolerates.
"""

import logging
import math
from collections.abc import Callable
from collections.abc import Iterable
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from enum import Enum
from typing import Dict
from typing import List
from typing import Optional
from typing import Tuple

import numpy as np
from scipy.optimize import bisect

from .attacks import iae_improved_intercept_resend
from .attacks import iae_max_coherence
from .attacks import iae_two_slot
from .exceptions import NoSecureRegionError
from .exceptions import QKDError
from .exceptions import ValidationError
from .simulate import DetectorModel
from .simulate import ProtocolParams
from .units import ratio_to_db

logger = logging.getLogger(__name__)

QBER_TOLERANCE = 1e-4
SCAN_POINTS = 500
DEFAULT_FIBER_LOSS = 2.0  # dB/km at 850 nm

DEFAULT_DELTAS = (0.086, 0.061, 0.0)
DEFAULT_QBERS = (0.033, 0.0162)


class AttackKind(str, Enum):
    TWO_SLOT = "two_slot"
    MAX_COHERENCE = "max_coherence"
    IMPROVED = "improved"
    ENTANGLING = "entangling"

    @property
    def label(self) -> str:
        return {
            AttackKind.TWO_SLOT: "Two time-slots attack",
            AttackKind.MAX_COHERENCE: "Maximum coherence attack",
            AttackKind.IMPROVED: "Intercept-resend (improved protocol)",
            AttackKind.ENTANGLING: "Entangling attack (improved protocol)",
        }[self]


# Reference cells of the three security tables, keyed by attack and delta.
REFERENCE_QMAX = {
    AttackKind.TWO_SLOT: {0.086: 0.097, 0.061: 0.11, 0.0: 0.17},
    AttackKind.MAX_COHERENCE: {0.086: 0.046, 0.061: 0.050, 0.0: 0.058},
    AttackKind.ENTANGLING: {0.086: 0.058, 0.061: 0.065, 0.0: 0.12},
}
REFERENCE_ADVANTAGE = {
    0.033: {
        AttackKind.TWO_SLOT: {0.086: 0.49, 0.061: 0.54, 0.0: 0.72},
        AttackKind.MAX_COHERENCE: {0.086: 0.22, 0.061: 0.27, 0.0: 0.41},
        AttackKind.ENTANGLING: {0.086: 0.22, 0.061: 0.29, 0.0: 0.63},
    },
    0.0162: {
        AttackKind.TWO_SLOT: {0.086: 0.66, 0.061: 0.70, 0.0: 0.83},
        AttackKind.MAX_COHERENCE: {0.086: 0.52, 0.061: 0.57, 0.0: 0.69},
        AttackKind.ENTANGLING: {0.086: 0.43, 0.061: 0.50, 0.0: 0.80},
    },
}


def binary_entropy(p):
    """h2(p) in bits, zero at both ends; accepts scalars or arrays."""
    p = np.asarray(p, dtype=float)
    inside = (0 < p) & (p < 1)
    value = np.where(
        inside,
        -p * np.log2(p, where=inside, out=np.ones_like(p)) - (1 - p) * np.log2(1 - p, where=inside, out=np.ones_like(p)),
        0.0,
    )
    return float(value) if value.ndim == 0 else value


def i_ab(Q):
    """Bob's information per validated bit, 1 - h2(Q)."""
    q = np.asarray(Q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise ValidationError(f"Q must be in [0, 1] (got {Q}).")
    value = 1 - binary_entropy(q)
    return float(value) if np.ndim(value) == 0 else value


class EntanglingEnvelope:
    """
    I_AE of the entangling attack interpolated from optimized curve points.

    Infeasible points are dropped. Eve can always add noise, so the curve is
    replaced by its running maximum; she can also fall back to the
    intercept-resend attack, which is a floor.
    """

    def __init__(self, points, delta: float):
        feasible = sorted((p.Q, p.I_AE) for p in points if p.feasible and not math.isnan(p.I_AE))
        if not feasible:
            raise ValidationError("the entangling curve has no feasible point")
        qs, values = zip(*feasible)
        self.delta = delta
        self.q = np.concatenate([[0.0], qs])
        self.values = np.maximum.accumulate(np.concatenate([[0.0], values]))

    def __call__(self, Q: float) -> float:
        value = float(np.interp(Q, self.q, self.values))
        try:
            value = max(value, iae_improved_intercept_resend(Q, self.delta))
        except QKDError as e:
            logger.debug(f"no intercept-resend floor at Q = {Q}, delta = {self.delta}: {e}")
        return min(value, 1.0)


IAECurve = Callable[[float], float]


def i_ae(Q: float, attack: AttackKind | str, delta: float, curve: Optional[IAECurve] = None) -> float:
    """
    Eve's information for an attack family at (Q, delta).

    Args:
        Q: QBER
        attack: Attack family
        delta: Coherence loss
        curve: Interpolated curve, required for the entangling attack

    Raises:
        ConstraintViolationError: If the attack cannot produce Q under delta
    """
    attack = AttackKind(attack)
    if attack is AttackKind.TWO_SLOT:
        return iae_two_slot(Q, delta)
    if attack is AttackKind.MAX_COHERENCE:
        return iae_max_coherence(Q, delta, capped=True)
    if attack is AttackKind.IMPROVED:
        return iae_improved_intercept_resend(Q, delta)
    if curve is None:
        raise ValidationError("the entangling attack needs an optimized curve")
    return curve(Q)


def advantage(Q: float, attack: AttackKind | str, delta: float, curve: Optional[IAECurve] = None) -> float:
    """Bob's information advantage I_AB - I_AE in bits per validated pulse."""
    return i_ab(Q) - i_ae(Q, attack, delta, curve)


def _signed_advantage(Q: float, attack: AttackKind, delta: float, curve: Optional[IAECurve]) -> float:
    # where the attack cannot reach Q, Eve adds noise to a reachable point;
    # the advantage is then negative
    try:
        return advantage(Q, attack, delta, curve)
    except QKDError:
        return -1.0


def max_qber(
    attack: AttackKind | str,
    delta: float,
    curve: Optional[IAECurve] = None,
    tolerance: float = QBER_TOLERANCE,
    scan_points: int = SCAN_POINTS,
) -> float:
    """
    Largest QBER at which Bob keeps an advantage.

    Scans (0, 0.5) for the first sign change of I_AB - I_AE and bisects it.

    Args:
        attack: Attack family
        delta: Coherence loss
        curve: Interpolated curve, required for the entangling attack
        tolerance: Bisection tolerance in Q
        scan_points: Points of the bracketing scan

    Returns:
        q_max

    Raises:
        NoSecureRegionError: If I_AE >= I_AB everywhere or I_AB > I_AE on the whole bracket
    """
    attack = AttackKind(attack)
    grid = np.linspace(0.0, 0.5, scan_points + 1)[1:-1]
    values = np.array([_signed_advantage(q, attack, delta, curve) for q in grid])
    if values[0] <= 0:
        raise NoSecureRegionError(f"{attack.value} at delta = {delta}: Eve knows as much as Bob at every QBER")
    negative = np.flatnonzero(values <= 0)
    if negative.size == 0:
        raise NoSecureRegionError(f"{attack.value} at delta = {delta}: no crossing below Q = 0.5")
    upper = int(negative[0])
    root = bisect(
        _signed_advantage,
        grid[upper - 1],
        grid[upper],
        args=(attack, delta, curve),
        xtol=tolerance,
    )
    logger.debug(f"q_max({attack.value}, delta = {delta}) = {root:.5f}")
    return float(root)


@dataclass(frozen=True)
class SecurityCurve:
    """
    I_AE samples of one attack at one coherence loss.

    ``samples`` hold (Q, I_AE) pairs, increasing in Q and non-decreasing in
    I_AE. ``q_max`` is None when the curve never crosses I_AB.
    """

    attack: AttackKind
    delta: float
    samples: Tuple[Tuple[float, float], ...]
    q_max: Optional[float]

    def rows(self) -> List[Dict[str, float]]:
        return [{"Q": q, "I_AB": i_ab(q), "I_AE": value} for q, value in self.samples]


def default_q_grid(points: int = 200) -> np.ndarray:
    return np.linspace(0.0, 0.5, points + 1)[:-1]


def security_curve(
    attack: AttackKind | str,
    delta: float,
    q_grid: Optional[Iterable[float]] = None,
    curve: Optional[IAECurve] = None,
) -> SecurityCurve:
    """
    Sample I_AE along a QBER grid and solve for q_max.

    Points the attack cannot reach are dropped; the remaining values are
    replaced by their running maximum.
    """
    attack = AttackKind(attack)
    q_values = default_q_grid() if q_grid is None else np.asarray(list(q_grid), dtype=float)
    qs, values = [], []
    for q in np.sort(q_values):
        try:
            value = i_ae(float(q), attack, delta, curve)
        except QKDError:
            continue
        qs.append(float(q))
        values.append(value)
    envelope = np.maximum.accumulate(values) if values else np.array([])
    try:
        q_max = max_qber(attack, delta, curve)
    except NoSecureRegionError as e:
        logger.warning(str(e))
        q_max = None
    return SecurityCurve(
        attack=attack,
        delta=float(delta),
        samples=tuple(zip(qs, (float(v) for v in envelope))),
        q_max=q_max,
    )


@dataclass(frozen=True)
class SecurityTableRow:
    attack: AttackKind
    delta: float
    q_max: float
    advantages: Dict[float, float] = field(default_factory=dict)

    def as_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {"attack": self.attack.value, "delta": self.delta, "q_max": self.q_max}
        for q, value in self.advantages.items():
            row[f"advantage_at_{q:g}"] = value
        return row


def security_tables(
    deltas: Sequence[float] = DEFAULT_DELTAS,
    qbers: Sequence[float] = DEFAULT_QBERS,
    attacks: Sequence[AttackKind | str] = (AttackKind.TWO_SLOT, AttackKind.MAX_COHERENCE),
    entangling_curves: Optional[Dict[float, IAECurve]] = None,
) -> List[SecurityTableRow]:
    """
    Maximum QBER and Bob's advantage for every (attack, delta).

    The entangling attack is tabulated only for the deltas present in
    ``entangling_curves``. A missing crossing is reported as NaN.
    """
    entangling_curves = entangling_curves or {}
    rows = []
    for attack in (AttackKind(a) for a in attacks):
        for delta in deltas:
            curve = None
            if attack is AttackKind.ENTANGLING:
                curve = entangling_curves.get(delta)
                if curve is None:
                    logger.warning(f"no entangling curve for delta = {delta}, row skipped")
                    continue
            try:
                q_max = max_qber(attack, delta, curve)
            except NoSecureRegionError as e:
                logger.warning(str(e))
                q_max = math.nan
            advantages = {}
            for q in qbers:
                try:
                    advantages[q] = advantage(q, attack, delta, curve)
                except QKDError:
                    advantages[q] = math.nan
            rows.append(SecurityTableRow(attack=attack, delta=float(delta), q_max=q_max, advantages=advantages))
    return rows


# Noise and range
# ------------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseBudget:
    """Probabilities of one detection per useful slot, by source."""

    dark: float
    parasitic: float
    signal: float
    extinction_background: float

    def __post_init__(self):
        for name in ("dark", "parasitic", "signal", "extinction_background"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValidationError(f"{name} must be in [0, 1] (got {value}).")


def signal_per_slot(useful_detections: float, params: ProtocolParams) -> float:
    """Per-slot signal probability from the mean useful (slot 3 or 5) detections per sequence."""
    return useful_detections / (2 * params.pulses_per_sequence)


def noise_budget(detector: DetectorModel, params: ProtocolParams, signal: float) -> NoiseBudget:
    """
    Per-slot probabilities of the noise sources next to the signal.

    Args:
        detector: Dark and parasitic rates
        params: Slot duration and modulator extinction ratio
        signal: Detected signal probability per useful slot

    Returns:
        NoiseBudget
    """
    slot = params.grid.slot_duration
    return NoiseBudget(
        dark=detector.dark_rate * slot,
        parasitic=detector.parasitic_rate * slot,
        signal=signal,
        extinction_background=signal * params.extinction_ratio,
    )


@dataclass(frozen=True)
class RangeEstimate:
    allowed_attenuation: float
    allowed_attenuation_db: float
    range_km: float
    fiber_loss_db_per_km: float


def range_estimate(q_measured: float, q_max: float, fiber_loss_db_per_km: float = DEFAULT_FIBER_LOSS) -> RangeEstimate:
    """
    Line attenuation and fiber length left before the QBER reaches q_max.

    With constant absolute noise the QBER grows as the inverse of the line
    transmission, so the allowed attenuation is q_max / q_measured.

    Args:
        q_measured: QBER measured back to back
        q_max: Maximum tolerable QBER
        fiber_loss_db_per_km: Fiber loss

    Returns:
        RangeEstimate, zero range when q_measured >= q_max
    """
    if q_measured <= 0 or not 0 < q_max < 0.5:
        raise ValidationError(f"need q_measured > 0 and 0 < q_max < 0.5 (got {q_measured}, {q_max}).")
    if fiber_loss_db_per_km <= 0:
        raise ValidationError(f"fiber loss must be positive (got {fiber_loss_db_per_km}).")
    attenuation = max(q_max / q_measured, 1.0)
    attenuation_db = ratio_to_db(attenuation)
    return RangeEstimate(
        allowed_attenuation=attenuation,
        allowed_attenuation_db=attenuation_db,
        range_km=attenuation_db / fiber_loss_db_per_km,
        fiber_loss_db_per_km=fiber_loss_db_per_km,
    )


def inverse_transmission_qber(q_measured: float) -> Callable[[float], float]:
    """QBER model behind range_estimate: Q grows as 1 / transmission, capped at 0.5."""
    return lambda transmission: min(0.5, q_measured / transmission)


def range_sweep(
    attenuations_db: Iterable[float],
    qber_at: Callable[[float], float],
    q_max: float,
    fiber_loss_db_per_km: float = DEFAULT_FIBER_LOSS,
) -> List[Dict[str, float]]:
    """
    QBER against line attenuation, one row per attenuation.

    ``qber_at`` maps a line transmission to a QBER, either
    ``inverse_transmission_qber`` or a Monte Carlo run of the key arm.
    """
    rows = []
    for attenuation_db in attenuations_db:
        transmission = 10 ** (-attenuation_db / 10)
        q = qber_at(transmission)
        rows.append(
            {
                "attenuation_db": float(attenuation_db),
                "range_km": float(attenuation_db) / fiber_loss_db_per_km,
                "transmission": transmission,
                "Q": q,
                "secure": bool(q < q_max),
            },
        )
    return rows
