"""
Intercept-resend attacks on the time-coding protocol.

Eve measures the arrival slot of each intercepted pulse and resends a
substitute photon. The analytic expressions give Q, I_AE and the raw
interferometer contrast as functions of the interception fraction ``m`` and,
for the maximum-coherence attack, the spread ``x`` of the resent state. The
photon-level functions apply the same strategies to simulated events.
"""

import logging
import math
from dataclasses import dataclass
from dataclasses import field
from typing import TYPE_CHECKING
from typing import Dict
from typing import List
from typing import Tuple
from typing import Union

import numpy as np
from scipy.optimize import brentq
from scipy.optimize import minimize_scalar

from .events import Origin
from .events import PhotonEvents
from .exceptions import ConstraintViolationError
from .exceptions import ValidationError
from .pulse import SlotGrid
from .utils.parallel import as_generator

if TYPE_CHECKING:
    from .coherence import InterferometerRecords
    from .entangle_opt import EveUnitaryParams

logger = logging.getLogger(__name__)

BIT_STATE = (math.sqrt(0.5), math.sqrt(0.5), 0.0)
KNOWN_SLOTS = (3, 5)


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must be in [0, 1] (got {value}).")


@dataclass(frozen=True)
class NoAttack:
    kind: str = field(default="none", init=False)


@dataclass(frozen=True)
class TwoSlot:
    """
    Eve resends a full bit state over two slots.

    ``slot4_policy`` is the probability of resending the bit-0 state
    ({3, 4}) after an ambiguous slot-4 detection.
    """

    m: float
    slot4_policy: float = 0.5
    kind: str = field(default="two_slot", init=False)

    def __post_init__(self):
        _check_probability("m", self.m)
        _check_probability("slot4_policy", self.slot4_policy)


@dataclass(frozen=True)
class MaxCoherence:
    """Eve resends the three-slot state centred on the slot she detected."""

    m: float
    x: float
    kind: str = field(default="max_coherence", init=False)

    def __post_init__(self):
        _check_probability("m", self.m)
        _check_probability("x", self.x)


@dataclass(frozen=True)
class Entangling:
    params: "EveUnitaryParams"
    kind: str = field(default="entangling", init=False)


AttackStrategy = Union[NoAttack, TwoSlot, MaxCoherence, Entangling]


@dataclass(frozen=True)
class ResentState:
    """Amplitudes of the resent photon over slots (j-1, j, j+1)."""

    amplitudes: tuple[float, float, float]

    def __post_init__(self):
        norm = sum(a * a for a in self.amplitudes)
        if abs(norm - 1.0) > 1e-12:
            raise ValidationError(f"resent state is not normalized (sum of squares {norm!r}).")

    @classmethod
    def max_coherence(cls, x: float) -> "ResentState":
        _check_probability("x", x)
        side = math.sqrt(x / 2)
        return cls((side, math.sqrt(1 - x), side))

    @property
    def overlap(self) -> float:
        """Lag-one overlap of the slot amplitudes, the contrast it produces."""
        a = self.amplitudes
        return a[0] * a[1] + a[1] * a[2]


@dataclass(frozen=True)
class AttackOutcome:
    """Q, I_AE and contrast of an attack; ``delta`` is derived from the contrast."""

    Q: float
    I_AE: float
    contrast: float
    validation_probability: float
    delta: float = 0.0
    standard_errors: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("Q", "I_AE", "contrast", "validation_probability"):
            value = getattr(self, name)
            if not -1e-12 <= value <= 1 + 1e-12:
                raise ValidationError(f"{name} must be in [0, 1] (got {value}).")


# Analytic outcomes
# ------------------------------------------------------------------------------

def max_coherence_analytic(m: float, x: float) -> AttackOutcome:
    """
    Outcome of the maximum-coherence attack.

    Args:
        m: Interception fraction
        x: Weight of the side slots in the resent state

    Returns:
        AttackOutcome with Q = m x / 2, I_AE = m (1 - x) and the raw contrast
    """
    _check_probability("m", m)
    _check_probability("x", x)
    contrast = m * math.sqrt(2 * (1 - x) * x) + (1 - m) / 2
    return AttackOutcome(
        Q=m * x / 2,
        I_AE=m * (1 - x),
        contrast=contrast,
        validation_probability=0.5,
        delta=1 - 2 * contrast,
    )


def iae_max_coherence(Q: float, delta: float, *, capped: bool = False) -> float:
    """
    Eve's information for the max-coherence attack at given QBER and coherence loss.

    Args:
        Q: QBER
        delta: Coherence loss
        capped: Return the m = 1 bound instead of raising when m would exceed one

    Returns:
        I_AE = 6Q + delta + 4 sqrt(Q (2Q + delta))

    Raises:
        ConstraintViolationError: If the implied interception fraction exceeds one
    """
    if Q < 0 or delta < 0:
        raise ValidationError(f"Q and delta must be non-negative (got {Q}, {delta}).")
    iae = 6 * Q + delta + 4 * math.sqrt(Q * (2 * Q + delta))
    m = iae + 2 * Q
    if m > 1 + 1e-12:
        if capped:
            return max(0.0, 1 - 2 * Q)
        raise ConstraintViolationError(
            f"max-coherence attack needs m = {m:.6f} > 1 at Q = {Q}, delta = {delta}",
            binding_m=m,
        )
    return iae


def iae_improved(Q: float) -> float:
    """I_AE of intercept-resend against the improved protocol without coherence loss."""
    if not 0 <= Q <= 0.5:
        raise ValidationError(f"Q must be in [0, 0.5] (got {Q}).")
    return Q


def improved_coherence(x: float) -> float:
    """Coherence seen by the improved protocol's selected contrast for a resent state."""
    _check_probability("x", x)
    return 2 * math.sqrt(2 * (1 - x) * x) / (2 - x)


def improved_selected_contrast(m: float, x: float) -> float:
    """
    Selected contrast of the improved protocol under the max-coherence attack.

    Mixes unattacked pulses (contrast 1 in the selected slot) with resent
    states weighted by how often they land in the selected slot.
    """
    _check_probability("m", m)
    _check_probability("x", x)
    numerator = (1 - m) / 2 + m * math.sqrt(x * (1 - x) / 2)
    denominator = (1 - m) / 2 + m * (2 - x) / 4
    return numerator / denominator


def improved_intercept_resend_point(Q: float, delta: float = 0.0) -> Tuple[float, float]:
    """
    Interception fraction and spread of the best intercept-resend attack on the improved protocol.

    Eve wants the smallest spread x (most information, m (1 - x)) at
    m = 2Q / x whose selected contrast still passes 1 - delta. With
    delta = 0 only x = 2/3 passes.

    Returns:
        Tuple of (m, x)

    Raises:
        ConstraintViolationError: If no interception fraction reaches Q
    """
    if not 0 <= Q <= 0.5:
        raise ValidationError(f"Q must be in [0, 0.5] (got {Q}).")
    if Q == 0:
        return 0.0, 2.0 / 3.0
    if delta <= 0:
        if 3 * Q > 1:
            raise ConstraintViolationError(f"no intercept fraction reaches Q = {Q}", binding_m=3 * Q)
        return 3 * Q, 2.0 / 3.0

    target = 1 - delta
    x_lo = 2 * Q
    x_hi = 2.0 / 3.0
    if x_lo >= x_hi:
        x_best = x_lo
    else:
        def margin(x):
            return improved_selected_contrast(min(1.0, 2 * Q / x), x) - target

        xs = np.linspace(x_lo, x_hi, 2001)
        feasible = np.array([margin(x) >= 0 for x in xs])
        first = int(np.argmax(feasible))
        if first == 0:
            x_best = x_lo
        else:
            x_best = brentq(margin, xs[first - 1], xs[first], xtol=1e-12)
    return min(1.0, 2 * Q / x_best), float(x_best)


def iae_improved_intercept_resend(Q: float, delta: float = 0.0) -> float:
    """
    Best intercept-resend I_AE against the improved protocol.

    Delta = 0 reduces to I_AE = Q.
    """
    m, x = improved_intercept_resend_point(Q, delta)
    return m * (1 - x)


def two_slot_analytic(m: float, s3: float = 0.0, s4: float = 0.0) -> AttackOutcome:
    """
    Outcome of the two-slot family.

    With probability ``s3`` (after an unambiguous detection) or ``s4`` (after
    a slot-4 detection) Eve resends a single-slot pulse in the slot she
    detected instead of a two-slot bit state.
    """
    for name, value in (("m", m), ("s3", s3), ("s4", s4)):
        _check_probability(name, value)
    validation = 0.5 + m * (s3 - s4) / 4
    errors = m * (1 - s4) / 8
    informed = m * (1 + s3) / 4
    contrast = 0.5 - m * (s3 + s4) / 4
    return AttackOutcome(
        Q=errors / validation,
        I_AE=informed / validation,
        contrast=contrast,
        validation_probability=validation,
        delta=m * (s3 + s4) / 2,
    )


def _two_slot_s4(Q: float, m: np.ndarray, s3: np.ndarray) -> np.ndarray:
    # solve Q(m, s3, s4) = Q for s4
    with np.errstate(divide="ignore", invalid="ignore"):
        return (m / 8 - Q / 2 - Q * m * s3 / 4) / (m * (1 / 8 - Q / 4))


def iae_two_slot(Q: float, delta: float = 0.0, resolution: int = 401) -> float:
    """
    Best I_AE of the two-slot family at QBER Q under a coherence-loss budget.

    Without coherence loss this is the ideal two-slot attack, I_AE = 2Q. With
    delta > 0 the family (m, s3, s4) is searched on a grid and the best grid
    point is polished with a bounded scalar search over m.
    """
    if not 0 <= Q < 0.5:
        raise ValidationError(f"Q must be in [0, 0.5) (got {Q}).")
    if delta <= 0:
        if 4 * Q > 1:
            raise ConstraintViolationError(f"two-slot attack needs m = {4 * Q} > 1", binding_m=4 * Q)
        return 2 * Q
    if Q == 0:
        return 0.0

    def value(m, s3):
        s4 = _two_slot_s4(Q, m, s3)
        ok = (m > 0) & (s4 >= -1e-12) & (s4 <= 1 + 1e-12) & (m * (s3 + s4) / 2 <= delta + 1e-12)
        s4 = np.clip(np.nan_to_num(s4), 0.0, 1.0)
        validation = 0.5 + m * (s3 - s4) / 4
        iae = m * (1 + s3) / 4 / validation
        return np.where(ok, np.minimum(iae, 1.0), -np.inf)

    ms, s3s = np.meshgrid(np.linspace(0.0, 1.0, resolution), np.linspace(0.0, 1.0, resolution), indexing="ij")
    grid_values = value(ms, s3s)
    best = np.unravel_index(int(np.argmax(grid_values)), grid_values.shape)
    best_value = float(grid_values[best])
    if not np.isfinite(best_value):
        raise ConstraintViolationError(f"two-slot family cannot reach Q = {Q} at delta = {delta}", binding_m=1.0)

    s3_best = float(s3s[best])
    step = 1.0 / (resolution - 1)
    lo = max(float(ms[best]) - step, 1e-9)
    hi = min(float(ms[best]) + step, 1.0)
    polished = minimize_scalar(
        lambda m: -float(value(np.array(m), np.array(s3_best))),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    if polished.success and -polished.fun > best_value:
        best_value = float(-polished.fun)
    return best_value


# Photon-level attacks
# ------------------------------------------------------------------------------

def _resent_states(strategy: AttackStrategy, eve_slots: np.ndarray, rng: np.random.Generator):
    n = eve_slots.size
    if isinstance(strategy, MaxCoherence):
        amps = np.tile(ResentState.max_coherence(strategy.x).amplitudes, (n, 1))
        return eve_slots - 1, amps
    base = np.where(eve_slots == 5, 4, 3)
    ambiguous = eve_slots == 4
    upper = rng.random(n) >= strategy.slot4_policy
    base = np.where(ambiguous & upper, 4, base)
    return base, np.tile(BIT_STATE, (n, 1))


def apply_intercept_resend(
    events: PhotonEvents,
    strategy: AttackStrategy,
    seed=None,
    grid: SlotGrid | None = None,
) -> PhotonEvents:
    """
    Replace intercepted pulses by one photon resent by Eve.

    Eve intercepts each non-empty pulse with probability ``m``, reads the
    slot of its first photon and resends a single photon in the state her
    strategy prescribes. The resent photon's time is drawn from the slot
    weights of that state.

    Args:
        events: Photons of one sequence
        strategy: TwoSlot or MaxCoherence
        seed: Seed, SeedSequence or Generator
        grid: Slot timing

    Returns:
        Time-sorted events with intercepted photons replaced
    """
    if isinstance(strategy, NoAttack):
        return events
    if not isinstance(strategy, (TwoSlot, MaxCoherence)):
        raise ValidationError(f"photon-level interception needs a TwoSlot or MaxCoherence strategy, got {strategy.kind}")
    if strategy.m == 0 or len(events) == 0:
        return events

    grid = grid or SlotGrid()
    rng = as_generator(seed)
    ordered = events.sorted()
    pulses, first = np.unique(ordered.pulse_index, return_index=True)
    intercepted = rng.random(pulses.size) < strategy.m
    hit_pulses = pulses[intercepted]
    first_times = ordered.times[first[intercepted]]

    within = first_times - hit_pulses * grid.period - grid.bit0_delay
    eve_slots = np.clip(3 + np.floor(within / grid.slot_duration).astype(np.int64), 3, 5)
    base, amps = _resent_states(strategy, eve_slots, rng)

    weights = amps**2
    component = (rng.random(hit_pulses.size)[:, None] > np.cumsum(weights, axis=1)).sum(axis=1)
    component = np.minimum(component, 2)
    slot = base + component
    times = hit_pulses * grid.period + grid.bit0_delay + (slot - 3 + rng.random(hit_pulses.size)) * grid.slot_duration

    resent = PhotonEvents.build(
        times=times,
        pulse_index=hit_pulses,
        origin=Origin.RESENT,
        base_slot=base,
        amplitudes=amps,
        eve_slot=eve_slots,
    )
    kept = ordered.select(~np.isin(ordered.pulse_index, hit_pulses))
    logger.debug(f"Eve intercepted {hit_pulses.size} of {pulses.size} non-empty pulses")
    return PhotonEvents.concatenate([kept, resent]).sorted()


def bit_state_photons(bits: np.ndarray, grid: SlotGrid, rng: np.random.Generator) -> PhotonEvents:
    """One photon per pulse in the ideal square bit state."""
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.size
    pulse_index = np.arange(n)
    times = pulse_index * grid.period + grid.bit0_delay + bits * grid.slot_duration + rng.random(n) * grid.pulse_duration
    return PhotonEvents.build(
        times=times,
        pulse_index=pulse_index,
        origin=Origin.SIGNAL,
        base_slot=3 + bits,
        amplitudes=np.tile(BIT_STATE, (n, 1)),
    )


def simulate_attack_outcome(
    strategy: AttackStrategy,
    n_pulses: int,
    seed=None,
    grid: SlotGrid | None = None,
) -> AttackOutcome:
    """
    Monte Carlo estimate of Q, I_AE and raw contrast for a photon-level attack.

    Every pulse carries exactly one photon of the ideal square bit state and
    Bob's detection is perfect, which isolates the effect of the attack.

    Args:
        strategy: Attack applied to every sequence of pulses
        n_pulses: Number of single-photon pulses
        seed: Integer seed or SeedSequence
        grid: Slot timing

    Returns:
        AttackOutcome with ``standard_errors`` for Q, I_AE and contrast
    """
    from .coherence import InterferometerModel  # noqa: PLC0415
    from .coherence import interfere_events  # noqa: PLC0415

    grid = grid or SlotGrid()
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(4)
    bits = as_generator(streams[0]).integers(0, 2, n_pulses)
    photons = bit_state_photons(bits, grid, as_generator(streams[1]))
    attacked = apply_intercept_resend(photons, strategy, streams[2], grid)

    within = attacked.times - attacked.pulse_index * grid.period
    slots = grid.slots_of(within)
    sent = bits[attacked.pulse_index]
    validated = (slots == 3) | (slots == 5)
    n_valid = int(np.count_nonzero(validated))
    errors = int(np.count_nonzero(validated & (slots != np.where(sent == 1, 5, 3))))
    informed = int(np.count_nonzero(validated & np.isin(attacked.eve_slot, KNOWN_SLOTS)))

    ideal = InterferometerModel(intrinsic_visibility=1.0, insertion_transmission=1.0)
    ports, _ = interfere_events(attacked, ideal, 0.0, streams[3], grid=grid)
    contrast = float(np.mean(ports))

    q = errors / n_valid if n_valid else 0.0
    iae = informed / n_valid if n_valid else 0.0
    n = max(len(attacked), 1)
    return AttackOutcome(
        Q=q,
        I_AE=iae,
        contrast=contrast,
        validation_probability=n_valid / n,
        delta=1 - 2 * contrast,
        standard_errors={
            "Q": math.sqrt(q * (1 - q) / max(n_valid, 1)),
            "I_AE": math.sqrt(iae * (1 - iae) / max(n_valid, 1)),
            "contrast": float(np.std(ports)) / math.sqrt(n),
        },
    )


def improved_contrast_selection(records: "InterferometerRecords", bits: np.ndarray) -> "InterferometerRecords":
    """
    Keep the interferometer detections the improved protocol uses.

    Slot 4 for pulses carrying bit 0, slot 5 for bit 1; everything else is
    discarded.
    """
    if len(records) == 0:
        return records
    bits = np.asarray(bits, dtype=np.int64)
    wanted = np.where(bits[records.pulse_index] == 1, 5, 4)
    return records.select(records.slot == wanted)


def attack_sweep(m_values, x_values) -> List[Dict[str, float]]:
    """Analytic max-coherence outcomes over an (m, x) grid, one row per point."""
    rows = []
    for m in m_values:
        for x in x_values:
            outcome = max_coherence_analytic(float(m), float(x))
            rows.append(
                {
                    "m": float(m),
                    "x": float(x),
                    "Q": outcome.Q,
                    "I_AE": outcome.I_AE,
                    "contrast": outcome.contrast,
                    "selected_contrast": improved_selected_contrast(float(m), float(x)),
                },
            )
    return rows
