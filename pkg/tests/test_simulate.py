import math

import numpy as np
import pytest
from scipy import stats

from timecoding_qkd.qkd.alignment import align_clock
from timecoding_qkd.qkd.alignment import assign_slots
from timecoding_qkd.qkd.alignment import fold_spread
from timecoding_qkd.qkd.config import RunConfig
from timecoding_qkd.qkd.events import DetectionRecords
from timecoding_qkd.qkd.events import Origin
from timecoding_qkd.qkd.exceptions import InsufficientStatisticsError
from timecoding_qkd.qkd.exceptions import UndefinedQBERError
from timecoding_qkd.qkd.exceptions import ValidationError
from timecoding_qkd.qkd.pulse import PulseProfile
from timecoding_qkd.qkd.services import SimulationService
from timecoding_qkd.qkd.services import known_alignment
from timecoding_qkd.qkd.simulate import apply_channel
from timecoding_qkd.qkd.simulate import dead_time_mask
from timecoding_qkd.qkd.simulate import detect_key_arm
from timecoding_qkd.qkd.simulate import emit_sequence
from timecoding_qkd.qkd.simulate import estimate_qber
from timecoding_qkd.qkd.simulate import random_bits
from timecoding_qkd.qkd.simulate import sample_emission_offsets
from timecoding_qkd.qkd.units import NS

from tests.factories import ClockModelFactory
from tests.factories import DetectorModelFactory
from tests.factories import ProtocolParamsFactory


def test_random_bits_balanced():
    bits = random_bits(100_000, seed=1)
    assert set(np.unique(bits)) == {0, 1}
    assert abs(bits.mean() - 0.5) < 0.01


def test_emission_photon_count():
    params = ProtocolParamsFactory(pulses_per_sequence=20_000, extinction_ratio=0.0)
    bits = random_bits(params.pulses_per_sequence, seed=2)
    events = emit_sequence(bits, params, PulseProfile.fitted(), seed=3)
    expected = params.mean_photons_per_pulse * params.pulses_per_sequence
    assert abs(events.count(Origin.SIGNAL) - expected) < 5 * math.sqrt(expected)
    assert events.count(Origin.BACKGROUND) == 0
    assert np.all(np.diff(events.times) >= 0)


def test_square_photons_stay_in_their_pulse(square: PulseProfile):
    params = ProtocolParamsFactory(extinction_ratio=0.0)
    bits = random_bits(params.pulses_per_sequence, seed=4)
    events = emit_sequence(bits, params, square, seed=5)
    grid = params.grid
    start = events.pulse_index * grid.period + np.where(bits[events.pulse_index] == 1, grid.bit1_delay, grid.bit0_delay)
    offset = events.times - start
    assert np.all((offset >= 0) & (offset <= grid.pulse_duration))


def test_square_emission_times_uniform(square: PulseProfile):
    offsets = sample_emission_offsets(square, 20_000, np.random.default_rng(6)) / NS
    result = stats.kstest(offsets, "uniform", args=(-10.0, 20.0))
    assert result.pvalue > 1e-3


def test_emission_rejects_wrong_bit_count(square: PulseProfile):
    params = ProtocolParamsFactory()
    with pytest.raises(ValidationError):
        emit_sequence(np.zeros(10, dtype=int), params, square, seed=0)


def test_emission_deterministic(fitted: PulseProfile):
    params = ProtocolParamsFactory()
    bits = random_bits(params.pulses_per_sequence, seed=6)
    first = emit_sequence(bits, params, fitted, seed=7)
    second = emit_sequence(bits, params, fitted, seed=7)
    np.testing.assert_array_equal(first.times, second.times)
    np.testing.assert_array_equal(first.origin, second.origin)


def test_channel_thinning(fitted: PulseProfile):
    params = ProtocolParamsFactory(pulses_per_sequence=20_000)
    events = emit_sequence(random_bits(params.pulses_per_sequence, seed=8), params, fitted, seed=9)
    assert apply_channel(events, 1.0, seed=1) is events
    assert len(apply_channel(events, 0.0, seed=1)) == 0
    half = len(apply_channel(events, 0.5, seed=1))
    assert abs(half - len(events) / 2) < 5 * math.sqrt(len(events) / 4)
    with pytest.raises(ValidationError):
        apply_channel(events, 1.5)


def test_dead_time_mask():
    times = np.array([0.0, 10.0, 60.0, 70.0, 200.0]) * NS
    np.testing.assert_array_equal(dead_time_mask(times, 50 * NS), [True, False, True, False, True])


def test_detections_respect_dead_time(fitted: PulseProfile):
    params = ProtocolParamsFactory(mean_photons_per_pulse=2.0)
    detector = DetectorModelFactory(dead_time=50 * NS)
    events = emit_sequence(random_bits(params.pulses_per_sequence, seed=10), params, fitted, seed=11)
    records = detect_key_arm(events, detector, ClockModelFactory(), params, seed=12)
    assert np.all(np.diff(records.raw_time) >= 50 * NS)


def test_noiseless_detection_accounting(fitted: PulseProfile):
    params = ProtocolParamsFactory(pulses_per_sequence=20_000, extinction_ratio=0.0)
    detector = DetectorModelFactory(quiet=True)
    events = emit_sequence(random_bits(params.pulses_per_sequence, seed=13), params, fitted, seed=14)
    records = detect_key_arm(events, detector, ClockModelFactory(synchronous=True), params, seed=15, sequence_index=3)
    expected = len(events) * detector.arm_probability
    assert abs(len(records) - expected) < 5 * math.sqrt(expected)
    assert records.count(Origin.SIGNAL) == len(records)
    assert set(np.unique(records.sequence_index)) == {3}


def test_noise_counts_follow_rates(fitted: PulseProfile):
    params = ProtocolParamsFactory(mean_photons_per_pulse=0.0)
    detector = DetectorModelFactory(dark_rate=2e6, parasitic_rate=0.0, dead_time=0.0)
    events = emit_sequence(np.zeros(params.pulses_per_sequence, dtype=int), params, fitted, seed=1)
    records = detect_key_arm(events, detector, ClockModelFactory(), params, seed=2)
    expected = detector.dark_rate * params.sequence_duration
    assert abs(records.count(Origin.DARK) - expected) < 5 * math.sqrt(expected)


def test_square_pulses_without_noise_have_no_errors(square: PulseProfile):
    params = ProtocolParamsFactory(extinction_ratio=0.0)
    detector = DetectorModelFactory(quiet=True)
    clock = ClockModelFactory()
    bits = random_bits(params.pulses_per_sequence, seed=16)
    records = detect_key_arm(emit_sequence(bits, params, square, seed=17), detector, clock, params, seed=18)
    records = assign_slots(records, known_alignment(clock, params, records), params)
    q, counts = estimate_qber(records, bits, params.grid)
    assert q == 0.0
    assert counts["errors"] == 0
    assert counts["unambiguous"] == counts["slot3"] + counts["slot5"]
    assert counts["slot4"] > 0


def test_qber_needs_unambiguous_detections(grid):
    with pytest.raises(UndefinedQBERError):
        estimate_qber(DetectionRecords.empty(), np.zeros(10, dtype=int), grid)


def _skewed_records(params, clock, sequences: int, profile: PulseProfile):
    detector = DetectorModelFactory()
    parts, bits = [], []
    for index in range(sequences):
        sent = random_bits(params.pulses_per_sequence, seed=100 + index)
        events = emit_sequence(sent, params, profile, seed=200 + index)
        parts.append(detect_key_arm(events, detector, clock, params, seed=300 + index, sequence_index=index))
        bits.append(sent)
    return DetectionRecords.concatenate(parts), np.stack(bits)


def test_alignment_recovers_clock(fitted: PulseProfile):
    params = ProtocolParamsFactory(pulses_per_sequence=32000, mean_photons_per_pulse=0.5)
    clock = ClockModelFactory()
    records, bits = _skewed_records(params, clock, 20, fitted)

    alignment = align_clock(records, params)
    true_period = params.grid.period * (1 + clock.relative_skew)
    assert alignment.residual_drift(true_period) < 0.4 * NS
    assert alignment.offset == pytest.approx(clock.offset * (1 + clock.relative_skew), abs=0.4 * NS)

    q, _ = estimate_qber(assign_slots(records, alignment, params), bits, params.grid)
    assert q < 0.06


def test_uncorrected_skew_smears_arrivals(fitted: PulseProfile):
    # 400 us sequences
    params = ProtocolParamsFactory(pulses_per_sequence=4000, mean_photons_per_pulse=0.5)
    clock = ClockModelFactory()
    records, _ = _skewed_records(params, clock, 20, fitted)

    alignment = align_clock(records, params)
    assert alignment.drift == pytest.approx(20 * NS, rel=0.1)
    uncorrected = fold_spread(records.raw_time, params.grid.period, 0.01)
    corrected = fold_spread(records.raw_time, alignment.period, 0.01)
    assert uncorrected - corrected > 10 * NS


def test_alignment_needs_records():
    params = ProtocolParamsFactory()
    records = DetectionRecords.build(np.arange(50) * 1e-6, np.zeros(50, dtype=np.int8), np.zeros(50, dtype=np.int64))
    with pytest.raises(InsufficientStatisticsError):
        align_clock(records, params)


# Full transmission
# ------------------------------------------------------------------------------

def test_transmission_is_deterministic(small_config: RunConfig):
    first = SimulationService(small_config, seed=42).run_transmission()
    second = SimulationService(small_config, seed=42).run_transmission()
    assert first.records == second.records
    assert first.Q == second.Q


def test_transmission_independent_of_workers(small_config: RunConfig):
    inline = SimulationService(small_config, seed=43, jobs=1).run_transmission()
    pooled = SimulationService(small_config, seed=43, jobs=2).run_transmission()
    assert inline.records == pooled.records


def test_transmission_default_qber(small_config: RunConfig):
    config = small_config.with_overrides({"protocol.pulses_per_sequence": 32000, "protocol.sequence_count": 12})
    result = SimulationService(config, seed=44).run_transmission()
    assert 0.015 <= result.Q <= 0.04
    assert result.alignment is not None


def test_transmission_noiseless_qber_is_profile_limited(small_config: RunConfig):
    config = small_config.with_overrides(
        {"detector.noise": False, "protocol.pulses_per_sequence": 32000, "protocol.sequence_count": 48},
    )
    result = SimulationService(config, seed=48).run_transmission()
    assert result.Q == pytest.approx(0.022, abs=0.005)
    assert result.counts["unambiguous"] > 7000


def test_transmission_without_photons(small_config: RunConfig):
    config = small_config.with_overrides({"protocol.mean_photon_number": 0.0})
    result = SimulationService(config, seed=45).run_transmission()
    assert result.Q is None
    assert any("mean photon number is 0" in line for line in result.diagnostics)


def test_qber_grows_as_transmission_drops(small_config: RunConfig):
    config = small_config.with_overrides(
        {
            "detector.parasitic_rate_per_s": 1e5,
            "alignment.enabled": False,
            "protocol.pulses_per_sequence": 32000,
            "protocol.sequence_count": 10,
        },
    )
    service = SimulationService(config, seed=46)
    qbers = [service.qber_at_transmission(t) for t in (1.0, 0.1, 0.01)]
    assert qbers[0] < qbers[1] < qbers[2] <= 0.5


def test_max_coherence_attack_in_transmission(small_config: RunConfig):
    config = small_config.with_overrides(
        {
            "profile.shape": "square",
            "detector.noise": False,
            "protocol.extinction_ratio": 0.0,
            "protocol.pulses_per_sequence": 8000,
            "protocol.sequence_count": 20,
            "alignment.enabled": False,
            "attack.kind": "max_coherence",
            "attack.m": 1.0,
            "attack.x": 2 / 3,
        },
    )
    result = SimulationService(config, seed=47).run_transmission()
    n = result.counts["unambiguous"]
    se = math.sqrt(result.Q * (1 - result.Q) / n)
    assert result.resent > 0
    assert abs(result.Q - 1 / 3) < 4 * se
