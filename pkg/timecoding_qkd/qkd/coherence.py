"""
Bob's interferometer arm and the estimator of the pulse coherence.

Each sequence sees a single random interferometer phase. The contrast of a
sequence is therefore gamma cos(phi) plus shot noise, and the coherence is
recovered from the spread of the contrasts over many sequences rather than
from their mean.
"""

import logging
import math
from dataclasses import dataclass
from dataclasses import fields
from dataclasses import replace
from typing import List
from typing import Optional
from typing import Sequence

import numpy as np

from .attacks import AttackStrategy
from .attacks import MaxCoherence
from .attacks import NoAttack
from .attacks import ResentState
from .attacks import TwoSlot
from .events import Origin
from .events import PhotonEvents
from .exceptions import CoherenceExceedsTheoryError
from .exceptions import InsufficientStatisticsError
from .exceptions import NoDataError
from .exceptions import ValidationError
from .pulse import PulseProfile
from .pulse import SlotGrid
from .pulse import autocorrelation
from .units import NS
from .utils.parallel import as_generator
from .utils.parallel import run_jobs
from .utils.parallel import spawn_seeds

logger = logging.getLogger(__name__)

# Intense-pulse measurement: 0.54 measured against 0.576 expected
MEASURED_INTENSE_GAMMA = 0.54
THEORETICAL_GAMMA = 0.576
DEFAULT_VISIBILITY = MEASURED_INTENSE_GAMMA / THEORETICAL_GAMMA
# Brings the 400 photons/sequence reaching the interferometer to the recorded 282.5
DEFAULT_INSERTION_TRANSMISSION = 282.5 / 400
# Contrast statistics of the recorded 290-sequence run
RECORDED_C2_BAR = 0.15
RECORDED_N_P = 282.5
RECORDED_N_S = 290
MIN_GAUSSIAN_PHOTONS = 50

PLUS = 1
MINUS = -1


@dataclass(frozen=True)
class InterferometerModel:
    path_delay: float = 10 * NS
    intrinsic_visibility: float = DEFAULT_VISIBILITY
    insertion_transmission: float = DEFAULT_INSERTION_TRANSMISSION
    count_dark_events: bool = False

    def __post_init__(self):
        if not 0.0 <= self.intrinsic_visibility <= 1.0:
            raise ValidationError(f"intrinsic_visibility must be in [0, 1] (got {self.intrinsic_visibility}).")
        if not 0.0 <= self.insertion_transmission <= 1.0:
            raise ValidationError(f"insertion_transmission must be in [0, 1] (got {self.insertion_transmission}).")
        if self.path_delay <= 0:
            raise ValidationError("path_delay must be positive.")

    def check_grid(self, grid: SlotGrid) -> None:
        if not math.isclose(self.path_delay, grid.slot_duration, rel_tol=1e-9):
            raise ValidationError(
                f"interferometer delay {self.path_delay / NS:.3f} ns must equal the slot duration "
                f"{grid.slot_duration / NS:.3f} ns",
            )

    def effective_gamma(self, profile: PulseProfile) -> float:
        return self.intrinsic_visibility * autocorrelation(profile, self.path_delay)


@dataclass(frozen=True)
class SequenceContrast:
    C_k: float
    N_plus: float
    N_minus: float
    phase_truth: float = math.nan

    def __post_init__(self):
        if abs(self.C_k) > 1 + 1e-12:
            raise ValidationError(f"contrast must be in [-1, 1] (got {self.C_k}).")

    @property
    def total(self) -> float:
        return self.N_plus + self.N_minus


@dataclass(frozen=True)
class CoherenceEstimate:
    """
    Result of the contrast-variance estimator.

    ``sigma_T`` is the shot-noise width 2/(N_p N_s) of the estimator.
    ``sampling_sigma`` adds the spread that the random phases themselves
    contribute and is the width seen across repeated experiments.
    """

    gamma_0: float
    sigma_T: float
    gamma_floor: float
    delta: Optional[float]
    N_s: int
    N_p: float
    C2_bar: float
    sigma2: float
    k: float = 3.0
    gamma_th: Optional[float] = None
    delta_at_gamma_0: Optional[float] = None
    sampling_sigma: float = 0.0
    noise_dominated: bool = False
    exceeds_theory: bool = False

    def __post_init__(self):
        if self.gamma_floor > self.gamma_0 + 1e-15:
            raise ValidationError("gamma_floor cannot exceed gamma_0.")


@dataclass(frozen=True, eq=False)
class InterferometerRecords:
    """Interferometer detections: output port (+1/-1) and slot per photon."""

    pulse_index: np.ndarray
    port: np.ndarray
    slot: np.ndarray

    def __len__(self) -> int:
        return int(self.port.size)

    def select(self, mask: np.ndarray) -> "InterferometerRecords":
        return type(self)(**{f.name: getattr(self, f.name)[mask] for f in fields(self)})

    def contrast(self) -> float:
        if len(self) == 0:
            raise NoDataError("no interferometer detections")
        return float(np.mean(self.port))


def port_probability(gamma_eff: float, phase: float) -> float:
    """Probability of the plus port, (1 + gamma_eff cos(phase)) / 2."""
    return (1 + gamma_eff * math.cos(phase)) / 2


def _slot_state_table(amplitudes: np.ndarray, visibility: float, phase: float) -> np.ndarray:
    """
    Joint (port, output slot) probabilities for slot-amplitude states.

    Output slot k receives the undelayed amplitude a_k and the delayed a_(k-1),
    so n input slots spread over n + 1 output slots. The first n + 1 columns
    are the plus port on slots base..base+n, the last n + 1 the minus port.
    """
    a = np.atleast_2d(np.asarray(amplitudes, dtype=float))
    rows, width = a.shape
    padded = np.zeros((rows, width + 2))
    padded[:, 1 : width + 1] = a
    current = padded[:, 1:]
    delayed = padded[:, :-1]
    incoherent = (current**2 + delayed**2) / 4
    coherent = visibility * current * delayed * math.cos(phase) / 2
    return np.clip(np.hstack([incoherent + coherent, incoherent - coherent]), 0.0, None)


def interfere(amplitudes, model: InterferometerModel, phase: float, seed=None, base_slot: int = 3):
    """
    Send one photon through the interferometer.

    The plus port comes out with probability (1 + V s cos(phase)) / 2, where
    s is the lag-one overlap of the amplitudes. A long flat amplitude
    vector has s close to 1.

    Args:
        amplitudes: Real slot amplitudes starting at ``base_slot``
        model: Interferometer
        phase: Interferometer phase (rad)
        seed: Seed or Generator
        base_slot: Slot of the first amplitude

    Returns:
        Tuple of (port, slot) with port "plus" or "minus"
    """
    amps = np.asarray(amplitudes, dtype=float)
    if amps.ndim != 1 or amps.size == 0 or abs(float(np.sum(amps**2)) - 1.0) > 1e-9:
        raise ValidationError(f"photon amplitudes must be a normalized vector (got {amplitudes}).")
    rng = as_generator(seed)
    probs = _slot_state_table(amps, model.intrinsic_visibility, phase)[0]
    outputs = amps.size + 1
    outcome = int(rng.choice(probs.size, p=probs / probs.sum()))
    port = "plus" if outcome < outputs else "minus"
    return port, base_slot + outcome % outputs


def interfere_events(
    events: PhotonEvents,
    model: InterferometerModel,
    phase: float,
    seed=None,
    grid: SlotGrid | None = None,
    profile: PulseProfile | None = None,
):
    """
    Vectorized interference of every photon of a sequence.

    Slot-amplitude photons use the exact joint distribution of port and slot.
    Photons that follow the pulse profile take their port from
    ``intrinsic_visibility * gamma(path_delay)`` and their slot from their
    arrival time, delayed by one slot for the long arm. Background photons
    carry no coherence.

    Returns:
        Tuple of (ports, slots) arrays; ports hold +1 or -1
    """
    grid = grid or SlotGrid()
    rng = as_generator(seed)
    n = len(events)
    ports = np.zeros(n, dtype=np.int8)
    slots = np.zeros(n, dtype=np.int64)
    u = rng.random(n)
    v = rng.random(n)

    stateful = events.base_slot > 0
    if np.any(stateful):
        table = _slot_state_table(events.amplitudes[stateful], model.intrinsic_visibility, phase)
        outputs = table.shape[1] // 2
        cumulative = np.cumsum(table, axis=1)
        cumulative /= cumulative[:, -1:]
        outcome = np.minimum((u[stateful, None] > cumulative).sum(axis=1), table.shape[1] - 1)
        ports[stateful] = np.where(outcome < outputs, PLUS, MINUS)
        slots[stateful] = events.base_slot[stateful] + outcome % outputs

    rest = ~stateful
    if np.any(rest):
        coherent = rest & (events.origin != Origin.BACKGROUND)
        gamma_eff = np.zeros(n)
        if np.any(coherent):
            if profile is None:
                raise ValidationError("a pulse profile is needed to interfere profile photons")
            gamma_eff[coherent] = model.effective_gamma(profile)
        p_plus = (1 + gamma_eff * math.cos(phase)) / 2
        ports[rest] = np.where(u[rest] < p_plus[rest], PLUS, MINUS)
        delayed = v[rest] < 0.5
        arrival = events.times[rest] + np.where(delayed, model.path_delay, 0.0)
        within = arrival - events.pulse_index[rest] * grid.period
        slots[rest] = grid.slots_of(within)
    return ports, slots


def interferometer_records(events: PhotonEvents, ports: np.ndarray, slots: np.ndarray) -> InterferometerRecords:
    return InterferometerRecords(pulse_index=events.pulse_index.copy(), port=ports, slot=slots)


def sequence_contrast(N_plus: float, N_minus: float, phase_truth: float = math.nan) -> SequenceContrast:
    """
    Contrast of one sequence, (N_plus - N_minus) / (N_plus + N_minus).

    Raises:
        NoDataError: If the sequence recorded no photons
    """
    if N_plus < 0 or N_minus < 0:
        raise ValidationError(f"port counts must be non-negative (got {N_plus}, {N_minus}).")
    total = N_plus + N_minus
    if total <= 0:
        raise NoDataError("sequence recorded no photons")
    return SequenceContrast(C_k=(N_plus - N_minus) / total, N_plus=N_plus, N_minus=N_minus, phase_truth=phase_truth)


def coherence_loss(gamma_th: float, gamma_exp: float) -> float:
    """
    Relative coherence loss, (gamma_th - gamma_exp) / gamma_th.

    Raises:
        CoherenceExceedsTheoryError: If the measured coherence exceeds the theoretical one
    """
    if gamma_th <= 0:
        raise ValidationError(f"gamma_th must be positive (got {gamma_th}).")
    if gamma_exp > gamma_th + 1e-12:
        raise CoherenceExceedsTheoryError(
            f"measured coherence {gamma_exp:.6f} exceeds the theoretical {gamma_th:.6f}; check gamma_th",
        )
    return (gamma_th - gamma_exp) / gamma_th


def sampling_sigma(gamma: float, N_p: float, N_s: int) -> float:
    """Spread of the estimator including the random-phase term."""
    sigma2 = 1.0 / N_p
    if gamma <= 0:
        return math.sqrt(2 * sigma2 / N_s)
    return math.sqrt((gamma**2 / 8 + 2 * sigma2 + 2 * sigma2**2 / gamma**2) / N_s)


def estimate_from_statistics(
    C2_bar: float,
    N_p: float,
    N_s: int,
    gamma_th: Optional[float] = None,
    k: float = 3.0,
) -> CoherenceEstimate:
    """
    Coherence estimate from the recorded contrast statistics.

    Args:
        C2_bar: Variance of the centered contrasts
        N_p: Mean photons per sequence
        N_s: Number of sequences
        gamma_th: Theoretical coherence, enables the coherence-loss fields
        k: Sigma multiplier for the floor

    Returns:
        CoherenceEstimate
    """
    if N_s < 2:
        raise InsufficientStatisticsError(f"the estimator needs at least 2 sequences (got {N_s})")
    if N_p <= 0:
        raise ValidationError(f"N_p must be positive (got {N_p}).")
    if N_p < MIN_GAUSSIAN_PHOTONS:
        logger.warning(f"N_p = {N_p} is below {MIN_GAUSSIAN_PHOTONS}; the Gaussian contrast model is unreliable")

    sigma2 = 1.0 / N_p
    radicand = 2 * (C2_bar - sigma2)
    noise_dominated = radicand < 0
    if noise_dominated:
        logger.warning(f"contrast variance {C2_bar:.4g} is below shot noise {sigma2:.4g}; gamma_0 clamped to 0")
    gamma_0 = math.sqrt(max(radicand, 0.0))
    sigma_T = math.sqrt(2 / (N_p * N_s))
    estimate = CoherenceEstimate(
        gamma_0=gamma_0,
        sigma_T=sigma_T,
        gamma_floor=gamma_0 - k * sigma_T,
        delta=None,
        N_s=N_s,
        N_p=N_p,
        C2_bar=C2_bar,
        sigma2=sigma2,
        k=k,
        gamma_th=gamma_th,
        sampling_sigma=sampling_sigma(gamma_0, N_p, N_s),
        noise_dominated=noise_dominated,
    )
    if gamma_th is None:
        return estimate
    return _with_loss(estimate, gamma_th)


def _with_loss(estimate: CoherenceEstimate, gamma_th: float) -> CoherenceEstimate:
    exceeds = False
    losses = []
    for value in (estimate.gamma_floor, estimate.gamma_0):
        try:
            losses.append(coherence_loss(gamma_th, value))
        except CoherenceExceedsTheoryError:
            exceeds = True
            losses.append(0.0)
    if exceeds:
        logger.warning(f"estimated coherence exceeds gamma_th = {gamma_th}; coherence loss reported as 0")
    return replace(estimate, delta=losses[0], delta_at_gamma_0=losses[1], exceeds_theory=exceeds)


def estimate_gamma(
    contrasts: Sequence[SequenceContrast],
    N_p: float,
    gamma_th: Optional[float] = None,
    k: float = 3.0,
) -> CoherenceEstimate:
    """
    Estimate gamma_0 = sqrt(2 (C2_bar - 1/N_p)) from per-sequence contrasts.

    The variance uses the sample mean as center, so the result does not
    depend on the order of the sequences.
    """
    if len(contrasts) < 2:
        raise InsufficientStatisticsError(f"the estimator needs at least 2 sequences (got {len(contrasts)})")
    values = np.array([c.C_k for c in contrasts], dtype=float)
    C2_bar = float(np.var(values, ddof=1))
    return estimate_from_statistics(C2_bar, N_p, len(contrasts), gamma_th=gamma_th, k=k)


def gamma_floor(estimate: CoherenceEstimate, k: float = 3.0) -> float:
    """gamma_0 - k sigma_T."""
    if k < 0:
        raise ValidationError(f"k must be non-negative (got {k}).")
    return estimate.gamma_0 - k * estimate.sigma_T


def sequences_for_target(delta_target: float, gamma_th: float, N_p: float, k: float = 3.0) -> int:
    """
    Sequences needed before the statistical part of the coherence loss, k sigma_T / gamma_th,
    drops below ``delta_target``.
    """
    if delta_target <= 0:
        raise ValidationError("delta_target must be positive.")
    return math.ceil(2 * k**2 / (N_p * (delta_target * gamma_th) ** 2))


# Sequence simulation
# ------------------------------------------------------------------------------

def attack_classes(
    model: InterferometerModel,
    profile: PulseProfile,
    strategy: AttackStrategy | None = None,
) -> List[tuple[float, float]]:
    """
    Photon classes reaching the interferometer as (weight, effective gamma).

    Eve resends one photon per intercepted pulse, so the resent class weighs
    ``m`` of the photons.
    """
    strategy = strategy or NoAttack()
    source = model.effective_gamma(profile)
    if isinstance(strategy, NoAttack) or getattr(strategy, "m", 0.0) == 0:
        return [(1.0, source)]
    if isinstance(strategy, MaxCoherence):
        resent = ResentState.max_coherence(strategy.x).overlap
    elif isinstance(strategy, TwoSlot):
        resent = 0.5
    else:
        raise ValidationError(f"no interferometer model for attack '{strategy.kind}'")
    return [(1 - strategy.m, source), (strategy.m, model.intrinsic_visibility * resent)]


@dataclass(frozen=True)
class ContrastSimulation:
    """Inputs of one contrast sequence, kept picklable for the worker pool."""

    classes: tuple[tuple[float, float], ...]
    photons_per_sequence: float
    noise_counts: float = 0.0
    fixed_phase: Optional[float] = None


def simulate_sequence_contrast(task: tuple[ContrastSimulation, np.random.SeedSequence]) -> SequenceContrast:
    setup, seed = task
    rng = as_generator(seed)
    phase = rng.uniform(0, 2 * math.pi) if setup.fixed_phase is None else setup.fixed_phase
    n_plus = 0
    n_minus = 0
    for weight, gamma_eff in setup.classes:
        n = int(rng.poisson(setup.photons_per_sequence * weight))
        plus = int(rng.binomial(n, (1 + gamma_eff * math.cos(phase)) / 2))
        n_plus += plus
        n_minus += n - plus
    if setup.noise_counts > 0:
        n = int(rng.poisson(setup.noise_counts))
        plus = int(rng.binomial(n, 0.5))
        n_plus += plus
        n_minus += n - plus
    return sequence_contrast(n_plus, n_minus, phase_truth=phase)


def simulate_contrasts(
    setup: ContrastSimulation,
    N_s: int,
    seed: int | np.random.SeedSequence = 0,
    jobs: int = 1,
) -> List[SequenceContrast]:
    """
    Contrast series of ``N_s`` sequences, each with its own phase and count stream.

    Args:
        setup: Photon classes and mean photon number per sequence
        N_s: Number of sequences
        seed: Master seed
        jobs: Worker processes

    Returns:
        SequenceContrast list in sequence order
    """
    if N_s < 1:
        raise ValidationError(f"N_s must be positive (got {N_s}).")
    tasks = [(setup, s) for s in spawn_seeds(seed, N_s)]
    return run_jobs(simulate_sequence_contrast, tasks, jobs)


def synthetic_contrasts(
    gamma: float,
    N_s: int,
    N_p: float,
    seed=None,
    model: str = "gaussian",
) -> List[SequenceContrast]:
    """
    Contrasts drawn from the generative model of the estimator.

    ``gaussian`` draws C_k from N(gamma cos(phi_k), 1/N_p); ``poisson`` draws
    Poisson photon numbers and splits them binomially between the ports.
    """
    rng = as_generator(seed)
    phases = rng.uniform(0, 2 * math.pi, N_s)
    if model == "gaussian":
        values = np.clip(gamma * np.cos(phases) + rng.normal(0.0, math.sqrt(1 / N_p), N_s), -1.0, 1.0)
        return [
            SequenceContrast(C_k=float(c), N_plus=N_p * (1 + c) / 2, N_minus=N_p * (1 - c) / 2, phase_truth=float(p))
            for c, p in zip(values, phases, strict=True)
        ]
    if model == "poisson":
        totals = rng.poisson(N_p, N_s)
        plus = rng.binomial(totals, (1 + gamma * np.cos(phases)) / 2)
        return [
            sequence_contrast(int(a), int(t - a), phase_truth=float(p))
            for a, t, p in zip(plus, totals, phases, strict=True)
            if t > 0
        ]
    raise ValidationError(f"unknown contrast model '{model}'")
