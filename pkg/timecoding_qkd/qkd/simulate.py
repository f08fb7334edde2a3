"""
Photon-level Monte Carlo of the key arm.

Alice's faint pulses are emitted with Poisson photon numbers, thinned by the
line, split by Bob's beamsplitter and time-tagged by a detector with jitter,
dark counts, parasitic light and dead time, all read on Bob's free-running
clock.
"""

import logging
import math
from dataclasses import dataclass
from dataclasses import field
from functools import lru_cache

import numpy as np

from .events import NO_PULSE
from .events import OUTSIDE
from .events import DetectionRecords
from .events import Origin
from .events import PhotonEvents
from .exceptions import UndefinedQBERError
from .exceptions import ValidationError
from .pulse import PulseProfile
from .pulse import SlotGrid
from .pulse import pulse_term
from .units import MS
from .units import NS
from .utils.parallel import as_generator

logger = logging.getLogger(__name__)

EMISSION_BINS = 1000
BEAMSPLITTER_RATIO = 0.5


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must be in [0, 1] (got {value}).")


@dataclass(frozen=True)
class ProtocolParams:
    grid: SlotGrid = field(default_factory=SlotGrid)
    mean_photons_per_pulse: float = 0.1
    pulses_per_sequence: int = 32000
    sequence_duration: float = 3.2 * MS
    inter_sequence_gap: float = 5 * MS
    extinction_ratio: float = 1e-3
    sequence_count: int = 290
    channel_transmission: float = 1.0

    def __post_init__(self):
        if self.mean_photons_per_pulse < 0:
            raise ValidationError(f"mean photon number must be non-negative (got {self.mean_photons_per_pulse}).")
        if self.mean_photons_per_pulse > 1:
            logger.warning(f"mean photon number {self.mean_photons_per_pulse} is outside the faint-pulse regime")
        if self.pulses_per_sequence < 1 or self.sequence_count < 1:
            raise ValidationError("pulses_per_sequence and sequence_count must be positive.")
        expected = self.pulses_per_sequence * self.grid.period
        if not math.isclose(expected, self.sequence_duration, rel_tol=1e-9):
            raise ValidationError(
                f"{self.pulses_per_sequence} pulses of {self.grid.period / NS:g} ns do not fill "
                f"a {self.sequence_duration / MS:g} ms sequence",
            )
        if self.extinction_ratio < 0 or self.inter_sequence_gap < 0:
            raise ValidationError("extinction_ratio and inter_sequence_gap must be non-negative.")
        _check_probability("channel_transmission", self.channel_transmission)


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 0.5
    dead_time: float = 50 * NS
    jitter_sigma: float = 0.35 * NS
    dark_rate: float = 110.0
    parasitic_rate: float = 1000.0
    filter_transmission: float = 0.5

    def __post_init__(self):
        _check_probability("efficiency", self.efficiency)
        _check_probability("filter_transmission", self.filter_transmission)
        for name in ("dead_time", "jitter_sigma", "dark_rate", "parasitic_rate"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative (got {getattr(self, name)}).")

    @property
    def arm_probability(self) -> float:
        """Probability that a photon reaching Bob is detected in the key arm."""
        return BEAMSPLITTER_RATIO * self.efficiency * self.filter_transmission

    def noiseless(self) -> "DetectorModel":
        return DetectorModel(
            efficiency=self.efficiency,
            dead_time=self.dead_time,
            jitter_sigma=self.jitter_sigma,
            dark_rate=0.0,
            parasitic_rate=0.0,
            filter_transmission=self.filter_transmission,
        )


@dataclass(frozen=True)
class ClockModel:
    relative_skew: float = 5e-5
    offset: float = 120 * NS

    def __post_init__(self):
        if abs(self.relative_skew) >= 1e-3:
            raise ValidationError(f"|relative_skew| must be below 1e-3 (got {self.relative_skew}).")

    def to_bob(self, t: np.ndarray) -> np.ndarray:
        """Map Alice-frame times to Bob's clock readings."""
        return (np.asarray(t) + self.offset) * (1 + self.relative_skew)


def random_bits(n: int, seed=None) -> np.ndarray:
    return as_generator(seed).integers(0, 2, n, dtype=np.int8)


@lru_cache(maxsize=16)
def emission_table(profile: PulseProfile, bins: int = EMISSION_BINS) -> tuple[np.ndarray, np.ndarray]:
    """
    Inverse-CDF table of the pulse term over the normalization window.

    Returns:
        Tuple of (bin edges relative to the pulse center, cumulative probabilities)
    """
    half = profile.normalization_window / 2
    edges = np.linspace(-half, half, bins + 1)
    mids = (edges[:-1] + edges[1:]) / 2
    weights = pulse_term(profile, profile.center + mids)
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    edges.setflags(write=False)
    cdf.setflags(write=False)
    return edges, cdf


def sample_emission_offsets(profile: PulseProfile, count: int, rng: np.random.Generator) -> np.ndarray:
    edges, cdf = emission_table(profile)
    index = np.minimum(np.searchsorted(cdf, rng.random(count), side="right"), cdf.size - 1)
    width = edges[1] - edges[0]
    return edges[index] + rng.random(count) * width


def _matches_slots(profile: PulseProfile, grid: SlotGrid) -> bool:
    return profile.is_square and math.isclose(profile.square_width, grid.pulse_duration, rel_tol=1e-12)


def emit_sequence(bits, params: ProtocolParams, profile: PulseProfile, seed=None) -> PhotonEvents:
    """
    Photons Alice emits during one sequence.

    Each pulse holds a Poisson(mu) number of photons whose emission times
    follow the pulse term, delayed by the bit. The modulator's extinction floor
    adds background photons uniformly over every period at a level
    ``extinction_ratio`` below the in-pulse intensity.

    Args:
        bits: One bit per pulse
        params: Protocol parameters
        profile: Pulse profile
        seed: Seed, SeedSequence or Generator

    Returns:
        Time-sorted PhotonEvents in Alice's frame
    """
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size != params.pulses_per_sequence:
        raise ValidationError(f"expected {params.pulses_per_sequence} bits, got {bits.size}")
    rng = as_generator(seed)
    grid = params.grid
    mu = params.mean_photons_per_pulse

    counts = rng.poisson(mu, bits.size)
    pulse_index = np.repeat(np.arange(bits.size), counts)
    photon_bits = bits[pulse_index]
    centers = pulse_index * grid.period + np.where(photon_bits == 1, grid.pulse_center(1), grid.pulse_center(0))
    times = centers + sample_emission_offsets(profile, pulse_index.size, rng)

    if _matches_slots(profile, grid):
        # an ideal square pulse is exactly the two-slot bit state
        base = 3 + photon_bits
        amps = np.tile((math.sqrt(0.5), math.sqrt(0.5), 0.0), (pulse_index.size, 1))
    else:
        base = None
        amps = None
    signal = PhotonEvents.build(times, pulse_index, Origin.SIGNAL, base_slot=base, amplitudes=amps)

    in_pulse_duration = profile.pulse_term_integral() / profile.amplitude_peak
    background_rate = mu * params.extinction_ratio / in_pulse_duration
    duration = bits.size * grid.period
    n_background = int(rng.poisson(background_rate * duration))
    bg_times = rng.random(n_background) * duration
    background = PhotonEvents.build(bg_times, np.floor(bg_times / grid.period), Origin.BACKGROUND)

    return PhotonEvents.concatenate([signal, background]).sorted()


def apply_channel(events: PhotonEvents, transmission: float, seed=None) -> PhotonEvents:
    """Independent thinning: each photon survives with probability ``transmission``."""
    _check_probability("transmission", transmission)
    if transmission == 1.0:
        return events
    rng = as_generator(seed)
    return events.select(rng.random(len(events)) < transmission)


def dead_time_mask(times: np.ndarray, dead_time: float) -> np.ndarray:
    """
    Greedy dead-time filter on sorted times.

    A detection is accepted when it comes at least ``dead_time`` after the
    previously accepted one.
    """
    keep = np.zeros(times.size, dtype=bool)
    last = -math.inf
    for i, t in enumerate(times):
        if t - last >= dead_time:
            keep[i] = True
            last = t
    return keep


def detect_key_arm(
    events: PhotonEvents,
    detector: DetectorModel,
    clock: ClockModel,
    params: ProtocolParams,
    seed=None,
    sequence_index: int = 0,
) -> DetectionRecords:
    """
    Time-tag the photons routed to the key arm.

    Args:
        events: Photons reaching Bob, time-sorted
        detector: Detector model
        clock: Bob's clock relative to Alice's
        params: Protocol parameters
        seed: Seed, SeedSequence or Generator
        sequence_index: Index stored on every record

    Returns:
        DetectionRecords sorted by Bob's clock, with pulse and slot unassigned
    """
    rng = as_generator(seed)
    detected = rng.random(len(events)) < detector.arm_probability
    times = events.times[detected]
    if detector.jitter_sigma > 0:
        times = times + rng.normal(0.0, detector.jitter_sigma, times.size)
    origins = [events.origin[detected]]
    sources = [events.pulse_index[detected]]
    all_times = [times]

    duration = params.sequence_duration
    for origin, rate in ((Origin.DARK, detector.dark_rate), (Origin.PARASITIC, detector.parasitic_rate)):
        n = int(rng.poisson(rate * duration))
        all_times.append(rng.random(n) * duration)
        origins.append(np.full(n, origin, dtype=np.int8))
        sources.append(np.full(n, NO_PULSE, dtype=np.int64))

    raw = clock.to_bob(np.concatenate(all_times))
    origin = np.concatenate(origins)
    source = np.concatenate(sources)
    order = np.argsort(raw, kind="stable")
    raw, origin, source = raw[order], origin[order], source[order]

    keep = dead_time_mask(raw, detector.dead_time) if detector.dead_time > 0 else np.ones(raw.size, dtype=bool)
    return DetectionRecords.build(raw[keep], origin[keep], source[keep], sequence_index=sequence_index)


def estimate_qber(records: DetectionRecords, bits, grid: SlotGrid) -> tuple[float, dict[str, int]]:
    """
    QBER over the unambiguous slots of aligned records.

    Args:
        records: Records after slot assignment
        bits: Sent bits, one row per sequence (or a single row for one sequence)
        grid: Slot timing

    Returns:
        Tuple of (Q, counts) where counts hold the slot tallies and error count

    Raises:
        UndefinedQBERError: If no record falls in slot 3 or 5
    """
    bits = np.asarray(bits, dtype=np.int64)
    assigned = records.pulse_index != NO_PULSE
    slots = records.slot
    counts = {
        "slot3": int(np.count_nonzero(slots == 3)),
        "slot4": int(np.count_nonzero(slots == 4)),
        "slot5": int(np.count_nonzero(slots == 5)),
        "outside": int(np.count_nonzero(slots == OUTSIDE)),
    }
    unambiguous = assigned & ((slots == 3) | (slots == 5))
    if not np.any(unambiguous):
        raise UndefinedQBERError("no detections in slots 3 or 5")

    pulses = records.pulse_index[unambiguous]
    if bits.ndim == 1:
        sent = bits[pulses]
    else:
        sent = bits[records.sequence_index[unambiguous], pulses]
    wrong = slots[unambiguous] == np.where(sent == 1, grid.wrong_slot(1), grid.wrong_slot(0))
    errors = int(np.count_nonzero(wrong))
    counts["errors"] = errors
    counts["unambiguous"] = int(np.count_nonzero(unambiguous))
    return errors / counts["unambiguous"], counts
