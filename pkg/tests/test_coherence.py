import math

import numpy as np
import pytest

from timecoding_qkd.qkd.attacks import MaxCoherence
from timecoding_qkd.qkd.attacks import ResentState
from timecoding_qkd.qkd.coherence import RECORDED_C2_BAR
from timecoding_qkd.qkd.coherence import RECORDED_N_P
from timecoding_qkd.qkd.coherence import RECORDED_N_S
from timecoding_qkd.qkd.coherence import THEORETICAL_GAMMA
from timecoding_qkd.qkd.coherence import ContrastSimulation
from timecoding_qkd.qkd.coherence import attack_classes
from timecoding_qkd.qkd.coherence import coherence_loss
from timecoding_qkd.qkd.coherence import estimate_from_statistics
from timecoding_qkd.qkd.coherence import estimate_gamma
from timecoding_qkd.qkd.coherence import gamma_floor
from timecoding_qkd.qkd.coherence import interfere
from timecoding_qkd.qkd.coherence import interfere_events
from timecoding_qkd.qkd.coherence import port_probability
from timecoding_qkd.qkd.coherence import sampling_sigma
from timecoding_qkd.qkd.coherence import sequence_contrast
from timecoding_qkd.qkd.coherence import sequences_for_target
from timecoding_qkd.qkd.coherence import simulate_contrasts
from timecoding_qkd.qkd.coherence import synthetic_contrasts
from timecoding_qkd.qkd.config import RunConfig
from timecoding_qkd.qkd.events import Origin
from timecoding_qkd.qkd.events import PhotonEvents
from timecoding_qkd.qkd.exceptions import CoherenceExceedsTheoryError
from timecoding_qkd.qkd.exceptions import InsufficientStatisticsError
from timecoding_qkd.qkd.exceptions import NoDataError
from timecoding_qkd.qkd.exceptions import ValidationError
from timecoding_qkd.qkd.pulse import PulseProfile
from timecoding_qkd.qkd.pulse import SlotGrid
from timecoding_qkd.qkd.services import CoherenceService
from timecoding_qkd.qkd.units import NS

from tests.factories import InterferometerModelFactory


def test_recorded_statistics():
    estimate = estimate_from_statistics(RECORDED_C2_BAR, RECORDED_N_P, RECORDED_N_S, gamma_th=THEORETICAL_GAMMA)
    assert estimate.gamma_0 == pytest.approx(0.5412, abs=1e-4)
    assert estimate.sigma_T == pytest.approx(0.00494, abs=1e-5)
    assert estimate.gamma_floor == pytest.approx(0.5264, abs=1e-4)
    assert estimate.delta == pytest.approx(0.086, abs=5e-4)
    assert estimate.delta_at_gamma_0 == pytest.approx(0.0604, abs=2e-4)
    # the loss quoted with gamma_0 rounded to three digits
    assert round(coherence_loss(THEORETICAL_GAMMA, round(estimate.gamma_0, 3)), 3) == 0.061
    assert estimate.sampling_sigma > estimate.sigma_T


def test_estimate_without_gamma_th():
    estimate = estimate_from_statistics(0.15, 282.5, 290)
    assert estimate.delta is None
    assert estimate.delta_at_gamma_0 is None


def test_noise_dominated_estimate():
    estimate = estimate_from_statistics(0.001, 282.5, 100)
    assert estimate.noise_dominated
    assert estimate.gamma_0 == 0.0
    assert estimate.gamma_floor < 0


def test_estimate_above_theory_flagged():
    estimate = estimate_from_statistics(0.2, 282.5, 290, gamma_th=0.5)
    assert estimate.exceeds_theory
    assert estimate.delta_at_gamma_0 == 0.0


def test_estimator_needs_two_sequences():
    with pytest.raises(InsufficientStatisticsError):
        estimate_from_statistics(0.15, 282.5, 1)
    with pytest.raises(InsufficientStatisticsError):
        estimate_gamma([sequence_contrast(150, 130)], 282.5)


@pytest.mark.parametrize("model", ["gaussian", "poisson"])
def test_estimator_recovers_synthetic_coherence(model: str):
    contrasts = synthetic_contrasts(0.5, 2000, 282.5, seed=21, model=model)
    estimate = estimate_gamma(contrasts, 282.5)
    assert estimate.gamma_0 == pytest.approx(0.5, abs=0.025)


def test_estimator_ignores_sequence_order():
    contrasts = synthetic_contrasts(0.5, 300, 282.5, seed=22)
    forward = estimate_gamma(contrasts, 282.5)
    backward = estimate_gamma(contrasts[::-1], 282.5)
    assert forward.gamma_0 == pytest.approx(backward.gamma_0, abs=1e-12)


def _replicate_gammas(gamma: float, N_s: int, N_p: float, replicates: int, seed: int) -> np.ndarray:
    seeds = np.random.SeedSequence(seed).spawn(replicates)
    return np.array(
        [estimate_gamma(synthetic_contrasts(gamma, N_s, N_p, seed=s, model="poisson"), N_p).gamma_0 for s in seeds],
    )


@pytest.mark.slow
def test_estimator_spread_across_replicates():
    gammas = _replicate_gammas(0.5, 10_000, 300.0, replicates=200, seed=31)
    sigma_T = math.sqrt(2 / (300.0 * 10_000))
    assert abs(gammas.mean() - 0.5) < 3 * sigma_T
    assert np.std(gammas, ddof=1) == pytest.approx(sampling_sigma(0.5, 300.0, 10_000), rel=0.2)


def test_estimator_bias_at_recorded_statistics():
    gammas = _replicate_gammas(0.54, 290, 282.5, replicates=1000, seed=32)
    sigma_T = math.sqrt(2 / (282.5 * 290))
    assert abs(gammas.mean() - 0.54) < sigma_T


def test_gamma_floor_multiplier():
    estimate = estimate_from_statistics(0.15, 282.5, 290)
    assert gamma_floor(estimate, k=0) == estimate.gamma_0
    assert gamma_floor(estimate, k=2) == pytest.approx(estimate.gamma_0 - 2 * estimate.sigma_T)
    with pytest.raises(ValidationError):
        gamma_floor(estimate, k=-1)


def test_coherence_loss():
    assert coherence_loss(THEORETICAL_GAMMA, THEORETICAL_GAMMA) == 0.0
    assert coherence_loss(0.5, 0.25) == pytest.approx(0.5)
    with pytest.raises(CoherenceExceedsTheoryError):
        coherence_loss(0.5, 0.6)


def test_sequence_contrast():
    assert sequence_contrast(150, 50).C_k == pytest.approx(0.5)
    with pytest.raises(NoDataError):
        sequence_contrast(0, 0)
    with pytest.raises(ValidationError):
        sequence_contrast(-1, 5)


def test_sequences_for_target():
    n = sequences_for_target(0.01, THEORETICAL_GAMMA, 282.5)
    estimate = estimate_from_statistics(0.15, 282.5, n)
    assert 3 * estimate.sigma_T / THEORETICAL_GAMMA <= 0.01
    assert 3 * math.sqrt(2 / (282.5 * (n - 1))) / THEORETICAL_GAMMA > 0.01


def test_port_probability():
    assert port_probability(1.0, 0.0) == 1.0
    assert port_probability(0.0, 1.3) == 0.5


def _ports(amplitudes, model, phase: float, draws: int, seed: int) -> list[str]:
    rng = np.random.default_rng(seed)
    return [interfere(amplitudes, model, phase, rng)[0] for _ in range(draws)]


def test_interfere_long_pulse_is_constructive():
    # a flat pulse over many slots has lag-one overlap close to 1
    amplitudes = np.full(10_000, 1 / 100.0)
    model = InterferometerModelFactory(ideal=True)
    assert _ports(amplitudes, model, 0.0, 1000, seed=33).count("plus") >= 999
    assert _ports(amplitudes, model, math.pi, 1000, seed=34).count("minus") >= 999


@pytest.mark.parametrize(
    ("amplitudes", "visibility", "phase"),
    [
        ([math.sqrt(0.5), math.sqrt(0.5)], 0.0, 0.0),
        ([math.sqrt(0.5), math.sqrt(0.5)], 0.0, 2.1),
        ([1.0], 1.0, 0.0),
    ],
)
def test_interfere_without_coherence_splits_evenly(amplitudes, visibility: float, phase: float):
    model = InterferometerModelFactory(intrinsic_visibility=visibility)
    plus = _ports(amplitudes, model, phase, 4000, seed=35).count("plus") / 4000
    assert abs(plus - 0.5) < 5 * math.sqrt(0.25 / 4000)


def test_interfere_slots():
    model = InterferometerModelFactory(ideal=True)
    rng = np.random.default_rng(36)
    draws = [interfere([math.sqrt(0.5), math.sqrt(0.5)], model, 0.0, rng, base_slot=3) for _ in range(2000)]
    assert {slot for _, slot in draws} == {3, 4, 5}
    # the middle slot is fully constructive at zero phase
    assert all(port == "plus" for port, slot in draws if slot == 4)


@pytest.mark.parametrize("amplitudes", [[1.0, 1.0], [], [[1.0]]])
def test_interfere_rejects_bad_amplitudes(amplitudes):
    with pytest.raises(ValidationError):
        interfere(amplitudes, InterferometerModelFactory(), 0.0, seed=37)


def test_interfere_matches_vectorized_interference():
    model = InterferometerModelFactory(ideal=True)
    state = ResentState.max_coherence(2 / 3)
    phase = 0.9
    expected = port_probability(model.intrinsic_visibility * state.overlap, phase)

    n = 20_000
    events = PhotonEvents.build(
        times=np.arange(n) * SlotGrid().period,
        pulse_index=np.arange(n),
        origin=Origin.RESENT,
        base_slot=np.full(n, 3),
        amplitudes=np.tile(state.amplitudes, (n, 1)),
    )
    ports, slots = interfere_events(events, model, phase, seed=38)
    assert set(np.unique(slots)) <= {3, 4, 5, 6}
    assert abs(np.mean(ports == 1) - expected) < 5 * math.sqrt(expected * (1 - expected) / n)

    single = _ports(state.amplitudes, model, phase, 4000, seed=39).count("plus") / 4000
    assert abs(single - expected) < 5 * math.sqrt(expected * (1 - expected) / 4000)


def test_interferometer_delay_must_match_slot():
    model = InterferometerModelFactory(path_delay=12 * NS)
    with pytest.raises(ValidationError):
        model.check_grid(SlotGrid())


def test_attack_classes(square: PulseProfile):
    model = InterferometerModelFactory(ideal=True)
    assert attack_classes(model, square) == [(1.0, pytest.approx(0.5, abs=1e-6))]
    classes = attack_classes(model, square, MaxCoherence(m=1.0, x=2 / 3))
    assert classes[1] == (1.0, pytest.approx(2 / 3))


def test_simulated_contrasts_deterministic():
    setup = ContrastSimulation(classes=((1.0, 0.5),), photons_per_sequence=282.5)
    first = simulate_contrasts(setup, 50, seed=23)
    second = simulate_contrasts(setup, 50, seed=23, jobs=2)
    assert [c.C_k for c in first] == [c.C_k for c in second]


def test_ideal_square_coherence():
    setup = ContrastSimulation(classes=((1.0, 0.5),), photons_per_sequence=282.5)
    estimate = estimate_gamma(simulate_contrasts(setup, 2000, seed=24), 282.5)
    assert estimate.gamma_0 == pytest.approx(0.5, abs=0.025)


def test_contrasts_are_bounded():
    setup = ContrastSimulation(classes=((1.0, 0.9),), photons_per_sequence=20.0, noise_counts=5.0)
    values = np.array([c.C_k for c in simulate_contrasts(setup, 200, seed=25)])
    assert np.all(np.abs(values) <= 1)


def test_fixed_phase_defeats_the_estimator():
    setup = ContrastSimulation(classes=((1.0, 0.5),), photons_per_sequence=282.5, fixed_phase=0.0)
    contrasts = simulate_contrasts(setup, 300, seed=40)
    assert np.mean([c.C_k for c in contrasts]) == pytest.approx(0.5, abs=0.01)
    # without a spread of phases only shot noise is left in the variance
    estimate = estimate_gamma(contrasts, 282.5)
    assert estimate.noise_dominated
    assert estimate.gamma_0 == 0.0


# Service
# ------------------------------------------------------------------------------

def test_coherence_service_default_run():
    run = CoherenceService(RunConfig.defaults(), seed=26).run()
    assert run.N_p == pytest.approx(282.5)
    assert len(run.contrasts) == 290
    assert run.estimate.gamma_0 == pytest.approx(run.gamma_eff, abs=0.05)
    report = CoherenceService.report(run)
    assert report["N_s"] == 290
    assert report["delta_at_gamma_floor"] == run.estimate.delta


def test_coherence_service_rejects_single_sequence():
    config = RunConfig.defaults().with_overrides({"protocol.sequence_count": 1})
    with pytest.raises(InsufficientStatisticsError):
        CoherenceService(config, seed=27).run()


def test_gamma_th_from_profile():
    config = RunConfig.defaults().with_overrides({"coherence.gamma_th_from_profile": True})
    assert CoherenceService(config, seed=28).gamma_th() == pytest.approx(0.5746, abs=0.003)


def test_photon_level_coherence_run():
    config = RunConfig.defaults().with_overrides({"interferometer.photon_level": True, "protocol.sequence_count": 200})
    run = CoherenceService(config, seed=41).run()
    assert len(run.contrasts) == 200
    assert run.N_p == pytest.approx(282.5, rel=0.05)
    assert run.estimate.gamma_0 == pytest.approx(run.gamma_eff, abs=0.06)


def test_photon_level_run_sees_max_coherence_attack():
    config = RunConfig.defaults().with_overrides(
        {
            "interferometer.photon_level": True,
            "protocol.sequence_count": 200,
            "attack.kind": "max_coherence",
            "attack.m": 1.0,
            "attack.x": 2 / 3,
        },
    )
    run = CoherenceService(config, seed=42).run()
    resent = config.interferometer().intrinsic_visibility * ResentState.max_coherence(2 / 3).overlap
    assert run.estimate.gamma_0 == pytest.approx(resent, abs=0.06)
