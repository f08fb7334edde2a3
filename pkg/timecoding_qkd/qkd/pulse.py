"""
Pulse temporal profiles and the slot grid.

Alice's pulses are described by a hyper-Gaussian intensity on top of a
constant background, or by a perfect square of width T. From a profile this
module derives the normalized amplitude g(t), its autocorrelation and the
QBER caused by the pulse shape alone.
"""

import logging
import math
from dataclasses import dataclass
from dataclasses import field
from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn

from .exceptions import ProfileWindowError
from .exceptions import ValidationError
from .units import NS

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 100 * NS
DEFAULT_STEP = 10e-12
MIN_WINDOW_FRACTION = 0.999

# Hyper-Gaussian fit of the measured pulses
FITTED_FWHM = 18.7 * NS
FITTED_ORDER = 4
FITTED_BACKGROUND = 1e-3
FITTED_SIGMA = FITTED_FWHM / 2 / (2 * math.log(2)) ** (1 / (2 * FITTED_ORDER))


@dataclass(frozen=True)
class PulseProfile:
    """
    Temporal intensity of one pulse.

    ``I(t) = I_A exp(-t'^(2n) / (2 sigma^(2n))) + I_B`` with ``t' = t - center``.
    When ``square_width`` is set the hyper-Gaussian term is replaced by
    ``I_A`` inside ``|t'| < square_width / 2``.
    """

    amplitude_peak: float = 1.0
    background: float = FITTED_BACKGROUND
    sigma: float = FITTED_SIGMA
    order: int = FITTED_ORDER
    normalization_window: float = DEFAULT_WINDOW
    center: float = 0.0
    square_width: float | None = None
    quadrature_step: float = DEFAULT_STEP

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValidationError(f"sigma must be positive (got {self.sigma}).")
        if self.order < 1:
            raise ValidationError(f"order must be >= 1 (got {self.order}).")
        if self.background < 0:
            raise ValidationError(f"background must be non-negative (got {self.background}).")
        if self.amplitude_peak <= 0:
            raise ValidationError(f"amplitude_peak must be positive (got {self.amplitude_peak}).")
        if self.square_width is not None and self.square_width <= 0:
            raise ValidationError(f"square_width must be positive (got {self.square_width}).")
        if self.quadrature_step <= 0 or self.normalization_window <= 0:
            raise ValidationError("quadrature step and normalization window must be positive.")
        cells = self.normalization_window / self.quadrature_step
        if abs(cells - round(cells)) > 1e-6:
            raise ValidationError(
                f"normalization window {self.normalization_window} is not a multiple "
                f"of the quadrature step {self.quadrature_step}.",
            )

    @classmethod
    def square(cls, width: float = 20 * NS, **kwargs) -> "PulseProfile":
        """Perfect square pulse of the given width, no background by default."""
        kwargs.setdefault("background", 0.0)
        return cls(square_width=width, **kwargs)

    @classmethod
    def from_fwhm(cls, fwhm: float, order: int = FITTED_ORDER, **kwargs) -> "PulseProfile":
        """
        Build a hyper-Gaussian profile from the FWHM of its pulse term.

        Args:
            fwhm: Full width at half maximum of the hyper-Gaussian term (s)
            order: Hyper-Gaussian order n

        Returns:
            PulseProfile whose sigma reproduces the requested FWHM
        """
        sigma = fwhm / 2 / (2 * math.log(2)) ** (1 / (2 * order))
        return cls(sigma=sigma, order=order, **kwargs)

    @classmethod
    def fitted(cls, **kwargs) -> "PulseProfile":
        """Fit of the measured pulses: FWHM 18.7 ns, n = 4, I_B/I_A = 1e-3."""
        kwargs.setdefault("background", FITTED_BACKGROUND)
        return cls.from_fwhm(FITTED_FWHM, FITTED_ORDER, **kwargs)

    @property
    def is_square(self) -> bool:
        return self.square_width is not None

    def fwhm(self) -> float:
        if self.square_width is not None:
            return self.square_width
        return 2 * self.sigma * (2 * math.log(2)) ** (1 / (2 * self.order))

    def pulse_term_integral(self) -> float:
        """Integral of the pulse term over the whole real line."""
        if self.square_width is not None:
            return self.amplitude_peak * self.square_width
        n2 = 2 * self.order
        return self.amplitude_peak * 2 * self.sigma * 2 ** (1 / n2) * float(gamma_fn(1 + 1 / n2))


@dataclass(frozen=True)
class SlotGrid:
    """Timing of the protocol: slots 3, 4 and 5 follow the start of each period."""

    slot_duration: float = 10 * NS
    pulse_duration: float = 20 * NS
    period: float = 100 * NS
    bit0_delay: float = 0.0
    bit1_delay: float = 10 * NS
    slot_indices: tuple[int, int, int] = field(default=(3, 4, 5))

    def __post_init__(self):
        if not math.isclose(self.pulse_duration, 2 * self.slot_duration, rel_tol=1e-12):
            raise ValidationError("pulse_duration must equal twice the slot_duration.")
        if not math.isclose(self.bit1_delay - self.bit0_delay, self.slot_duration, rel_tol=1e-12):
            raise ValidationError("bit1_delay - bit0_delay must equal the slot_duration.")
        if self.period <= self.pulse_duration + self.bit1_delay:
            raise ValidationError("period must exceed pulse_duration + bit1_delay.")
        if tuple(self.slot_indices) != (3, 4, 5):
            raise ValidationError(f"slot indices must be (3, 4, 5), got {self.slot_indices}.")

    def bit_delay(self, bit: int) -> float:
        return self.bit1_delay if bit else self.bit0_delay

    def pulse_center(self, bit: int) -> float:
        """Pulse center relative to the start of its period."""
        return self.bit_delay(bit) + self.pulse_duration / 2

    def slot_window(self, slot: int) -> tuple[float, float]:
        """[start, end) of a slot relative to the start of its period."""
        start = self.bit0_delay + (slot - 3) * self.slot_duration
        return start, start + self.slot_duration

    @staticmethod
    def correct_slot(bit: int) -> int:
        return 5 if bit else 3

    @staticmethod
    def wrong_slot(bit: int) -> int:
        return 3 if bit else 5

    def slots_of(self, within: np.ndarray) -> np.ndarray:
        """
        Slot label for times measured from the start of their period.

        Returns:
            Integer array with 3, 4 or 5, and 0 for times outside the slots
        """
        rel = (np.asarray(within, dtype=float) - self.bit0_delay) / self.slot_duration
        index = np.floor(rel).astype(np.int64)
        return np.where((index >= 0) & (index <= 2), index + 3, 0)


@dataclass(frozen=True)
class SampledAmplitude:
    """Normalized amplitude g sampled at cell midpoints."""

    offsets: np.ndarray
    values: np.ndarray
    step: float
    center: float

    @property
    def times(self) -> np.ndarray:
        return self.center + self.offsets

    def overlap_at_shift(self, cells: int) -> float:
        if cells >= self.values.size:
            return 0.0
        return float(self.step * np.dot(self.values[cells:], self.values[: self.values.size - cells]))

    def overlap(self, tau: float) -> float:
        shift = abs(tau) / self.step
        nearest = round(shift)
        if abs(shift - nearest) < 1e-9:
            return self.overlap_at_shift(int(nearest))
        lower = math.floor(shift)
        return float(
            np.interp(shift, [lower, lower + 1], [self.overlap_at_shift(lower), self.overlap_at_shift(lower + 1)]),
        )


def _offsets(profile: PulseProfile) -> np.ndarray:
    cells = round(profile.normalization_window / profile.quadrature_step)
    # antisymmetric by construction so even profiles give even samples
    return (np.arange(cells) - (cells - 1) / 2) * profile.quadrature_step


def _pulse_term(profile: PulseProfile, offsets: np.ndarray) -> np.ndarray:
    if profile.square_width is not None:
        return np.where(np.abs(offsets) < profile.square_width / 2, profile.amplitude_peak, 0.0)
    n2 = 2 * profile.order
    return profile.amplitude_peak * np.exp(-((offsets / profile.sigma) ** n2) / 2)


def pulse_term(profile: PulseProfile, t) -> np.ndarray:
    """Intensity without the background, I(t) - I_B."""
    return _pulse_term(profile, np.asarray(t, dtype=float) - profile.center)


def intensity(profile: PulseProfile, t):
    """
    Intensity of the profile at time t.

    Args:
        profile: Pulse profile
        t: Time or array of times (s)

    Returns:
        I(t) with the same shape as t
    """
    values = pulse_term(profile, t) + profile.background
    return float(values) if np.ndim(t) == 0 else values


def pulse_energy_fraction(profile: PulseProfile) -> float:
    """Fraction of the pulse-term energy that falls inside the normalization window."""
    offsets = _offsets(profile)
    inside = profile.quadrature_step * float(np.sum(_pulse_term(profile, offsets)))
    return inside / profile.pulse_term_integral()


@lru_cache(maxsize=32)
def normalized_amplitude(profile: PulseProfile) -> SampledAmplitude:
    """
    Sample g(t) proportional to sqrt(I(t)) with unit energy over the window.

    Uses the composite midpoint rule on a grid anchored at the profile
    center, so results do not depend on where the pulse sits in time.

    Raises:
        ProfileWindowError: If the window holds less than 99.9 % of the pulse energy
    """
    fraction = pulse_energy_fraction(profile)
    if fraction < MIN_WINDOW_FRACTION:
        msg = (
            f"normalization window {profile.normalization_window / NS:.3f} ns holds only "
            f"{fraction:.5f} of the pulse energy (need {MIN_WINDOW_FRACTION})"
        )
        raise ProfileWindowError(msg, fraction)

    offsets = _offsets(profile)
    amplitude = np.sqrt(_pulse_term(profile, offsets) + profile.background)
    norm = math.sqrt(profile.quadrature_step * float(np.dot(amplitude, amplitude)))
    values = amplitude / norm
    values.setflags(write=False)
    offsets.setflags(write=False)
    return SampledAmplitude(offsets=offsets, values=values, step=profile.quadrature_step, center=profile.center)


def autocorrelation(profile: PulseProfile, tau):
    """
    Autocorrelation gamma(tau) = integral of g(t) g(t - tau) dt.

    Shifts that are not a whole number of quadrature cells are linearly
    interpolated between the neighbouring cell shifts.

    Args:
        profile: Pulse profile
        tau: Delay or array of delays (s)

    Returns:
        gamma with the same shape as tau
    """
    amplitude = normalized_amplitude(profile)
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    result = np.array([amplitude.overlap(t) for t in taus.ravel()])
    if np.ndim(tau) == 0:
        return float(result[0])
    return result.reshape(taus.shape)


def _window_energy(profile: PulseProfile, offsets: np.ndarray, lo: float, hi: float) -> float:
    mask = (offsets >= lo) & (offsets < hi)
    values = _pulse_term(profile, offsets[mask]) + profile.background
    return profile.quadrature_step * float(np.sum(values))


def profile_qber(profile: PulseProfile, grid: SlotGrid) -> float:
    """
    QBER caused by the pulse shape alone.

    For a bit-0 pulse the error probability is the energy in slot 5 over the
    energy in slots 3 and 5; bit 1 is the mirror case. Returns the average.
    """
    half = profile.normalization_window / 2
    if half < grid.pulse_duration:
        msg = "normalization window does not cover the three slots around the pulse"
        raise ValidationError(msg)

    offsets = _offsets(profile)
    qbers = []
    for bit in (0, 1):
        center = grid.pulse_center(bit)
        energy = {}
        for slot in grid.slot_indices:
            lo, hi = grid.slot_window(slot)
            energy[slot] = _window_energy(profile, offsets, lo - center, hi - center)
        wrong = energy[grid.wrong_slot(bit)]
        right = energy[grid.correct_slot(bit)]
        qbers.append(wrong / (wrong + right))
    return float(np.mean(qbers))
