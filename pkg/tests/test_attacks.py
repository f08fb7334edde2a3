import math

import numpy as np
import pytest

from timecoding_qkd.qkd.attacks import AttackOutcome
from timecoding_qkd.qkd.attacks import MaxCoherence
from timecoding_qkd.qkd.attacks import NoAttack
from timecoding_qkd.qkd.attacks import ResentState
from timecoding_qkd.qkd.attacks import TwoSlot
from timecoding_qkd.qkd.attacks import apply_intercept_resend
from timecoding_qkd.qkd.attacks import attack_sweep
from timecoding_qkd.qkd.attacks import bit_state_photons
from timecoding_qkd.qkd.attacks import iae_improved
from timecoding_qkd.qkd.attacks import iae_improved_intercept_resend
from timecoding_qkd.qkd.attacks import iae_max_coherence
from timecoding_qkd.qkd.attacks import iae_two_slot
from timecoding_qkd.qkd.attacks import improved_coherence
from timecoding_qkd.qkd.attacks import improved_contrast_selection
from timecoding_qkd.qkd.attacks import improved_intercept_resend_point
from timecoding_qkd.qkd.attacks import improved_selected_contrast
from timecoding_qkd.qkd.attacks import max_coherence_analytic
from timecoding_qkd.qkd.attacks import simulate_attack_outcome
from timecoding_qkd.qkd.attacks import two_slot_analytic
from timecoding_qkd.qkd.coherence import InterferometerModel
from timecoding_qkd.qkd.coherence import InterferometerRecords
from timecoding_qkd.qkd.coherence import interfere_events
from timecoding_qkd.qkd.coherence import interferometer_records
from timecoding_qkd.qkd.events import Origin
from timecoding_qkd.qkd.exceptions import ConstraintViolationError
from timecoding_qkd.qkd.exceptions import ValidationError
from timecoding_qkd.qkd.pulse import SlotGrid


@pytest.mark.parametrize(
    ("m", "x", "q", "iae", "contrast"),
    [
        (1.0, 2 / 3, 1 / 3, 1 / 3, 2 / 3),
        (0.0, 0.4, 0.0, 0.0, 0.5),
        (0.5, 0.5, 0.125, 0.25, 0.5 * math.sqrt(0.5) + 0.25),
    ],
)
def test_max_coherence_analytic(m: float, x: float, q: float, iae: float, contrast: float):
    outcome = max_coherence_analytic(m, x)
    assert outcome.Q == pytest.approx(q)
    assert outcome.I_AE == pytest.approx(iae)
    assert outcome.contrast == pytest.approx(contrast)
    assert outcome.delta == pytest.approx(1 - 2 * contrast)


def test_iae_max_coherence_value():
    assert iae_max_coherence(0.033, 0.086) == pytest.approx(0.5673, abs=1e-4)
    assert iae_max_coherence(0.05, 0.0) == pytest.approx((6 + 4 * math.sqrt(2)) * 0.05)


def test_iae_max_coherence_infeasible():
    with pytest.raises(ConstraintViolationError) as excinfo:
        iae_max_coherence(0.2, 0.0)
    assert excinfo.value.binding_m > 1
    assert iae_max_coherence(0.2, 0.0, capped=True) == pytest.approx(0.6)


def test_improved_protocol_intercept_resend():
    assert improved_coherence(2 / 3) == pytest.approx(1.0)
    assert improved_coherence(0.0) == 0.0
    assert iae_improved(0.1) == 0.1
    assert iae_improved_intercept_resend(0.1, 0.0) == pytest.approx(0.1)
    assert improved_selected_contrast(0.3, 2 / 3) == pytest.approx(1.0)


def test_improved_intercept_resend_relaxes_with_delta():
    values = [iae_improved_intercept_resend(0.05, delta) for delta in (0.0, 0.061, 0.086)]
    assert values[0] <= values[1] + 1e-12 <= values[2] + 2e-12
    m, x = improved_intercept_resend_point(0.05, 0.086)
    assert 0 < m <= 1
    assert m * x / 2 == pytest.approx(0.05)
    assert improved_selected_contrast(m, x) >= 1 - 0.086 - 1e-9


def test_improved_intercept_resend_out_of_reach():
    with pytest.raises(ConstraintViolationError):
        improved_intercept_resend_point(0.4, 0.0)


def test_two_slot_family():
    outcome = two_slot_analytic(0.4)
    assert outcome.I_AE == pytest.approx(2 * outcome.Q)
    assert outcome.contrast == pytest.approx(0.5)
    assert iae_two_slot(0.1, 0.0) == pytest.approx(0.2)
    assert iae_two_slot(0.1, 0.086) >= 0.2 - 1e-9
    with pytest.raises(ConstraintViolationError):
        iae_two_slot(0.3, 0.0)


def test_resent_state():
    state = ResentState.max_coherence(2 / 3)
    assert sum(a * a for a in state.amplitudes) == pytest.approx(1.0)
    assert state.overlap == pytest.approx(2 / 3)
    with pytest.raises(ValidationError):
        ResentState((0.5, 0.5, 0.5))


@pytest.mark.parametrize(
    "build",
    [
        lambda: TwoSlot(m=1.5),
        lambda: MaxCoherence(m=0.5, x=-0.1),
        lambda: AttackOutcome(Q=1.5, I_AE=0.0, contrast=0.0, validation_probability=0.5),
    ],
)
def test_attack_invariants(build):
    with pytest.raises(ValidationError):
        build()


@pytest.mark.parametrize(("m", "x"), [(1.0, 2 / 3), (0.5, 0.3), (0.2, 0.9)])
def test_monte_carlo_matches_analytic(m: float, x: float):
    simulated = simulate_attack_outcome(MaxCoherence(m=m, x=x), 200_000, seed=11)
    expected = max_coherence_analytic(m, x)
    for name in ("Q", "I_AE", "contrast"):
        error = simulated.standard_errors[name]
        assert abs(getattr(simulated, name) - getattr(expected, name)) < 4 * error + 1e-9, name
    assert simulated.validation_probability == pytest.approx(0.5, abs=0.01)


@pytest.mark.slow
@pytest.mark.parametrize("m", [0.25, 0.5, 1.0])
@pytest.mark.parametrize("x", [0.2, 0.5, 2 / 3, 0.9])
def test_monte_carlo_grid_matches_analytic(m: float, x: float):
    simulated = simulate_attack_outcome(MaxCoherence(m=m, x=x), 1_000_000, seed=13)
    expected = max_coherence_analytic(m, x)
    for name in ("Q", "I_AE", "contrast"):
        error = simulated.standard_errors[name]
        assert abs(getattr(simulated, name) - getattr(expected, name)) < 4 * error + 1e-9, name


def test_max_coherence_elimination_recovers_information():
    rng = np.random.default_rng(14)
    # x <= 0.14 keeps the coherence loss non-negative
    for m, x in zip(rng.uniform(0.05, 1.0, 200), rng.uniform(0.0, 0.14, 200), strict=True):
        outcome = max_coherence_analytic(float(m), float(x))
        assert outcome.delta >= 0
        assert iae_max_coherence(outcome.Q, outcome.delta) == pytest.approx(m * (1 - x), abs=1e-9)


def test_max_coherence_information_grows_with_qber_and_loss():
    qs = np.linspace(0.0, 0.05, 11)
    deltas = [0.0, 0.03, 0.06, 0.09]
    table = np.array([[iae_max_coherence(float(q), d) for q in qs] for d in deltas])
    assert np.all(np.diff(table, axis=1) > 0)
    assert np.all(np.diff(table, axis=0) > 0)


def test_two_slot_monte_carlo_on_ideal_line():
    simulated = simulate_attack_outcome(TwoSlot(m=0.4), 200_000, seed=12)
    assert simulated.I_AE == pytest.approx(2 * simulated.Q, abs=0.01)


def test_resend_replaces_intercepted_pulses(grid):
    rng = np.random.default_rng(5)
    bits = rng.integers(0, 2, 5000)
    photons = bit_state_photons(bits, grid, rng)
    assert apply_intercept_resend(photons, NoAttack(), seed=1, grid=grid) is photons
    attacked = apply_intercept_resend(photons, MaxCoherence(m=1.0, x=2 / 3), seed=1, grid=grid)
    assert len(attacked) == len(photons)
    assert attacked.count(Origin.RESENT) == len(photons)
    half = apply_intercept_resend(photons, MaxCoherence(m=0.5, x=2 / 3), seed=1, grid=grid)
    assert abs(half.count(Origin.RESENT) - 2500) < 5 * math.sqrt(1250)


def test_improved_contrast_selection():
    records = InterferometerRecords(
        pulse_index=np.array([0, 0, 1, 1, 1]),
        port=np.array([1, -1, 1, 1, -1], dtype=np.int8),
        slot=np.array([4, 5, 4, 5, 3]),
    )
    selected = improved_contrast_selection(records, np.array([0, 1]))
    np.testing.assert_array_equal(selected.pulse_index, [0, 1])
    np.testing.assert_array_equal(selected.slot, [4, 5])


@pytest.mark.parametrize(
    "strategy",
    [NoAttack(), MaxCoherence(m=1.0, x=2 / 3), MaxCoherence(m=0.5, x=0.3), MaxCoherence(m=1.0, x=0.3)],
)
def test_selected_contrast_of_interfered_photons(strategy):
    grid = SlotGrid()
    rng = np.random.default_rng(15)
    bits = rng.integers(0, 2, 20_000)
    photons = apply_intercept_resend(bit_state_photons(bits, grid, rng), strategy, seed=16, grid=grid)
    ideal = InterferometerModel(intrinsic_visibility=1.0, insertion_transmission=1.0)
    ports, slots = interfere_events(photons, ideal, 0.0, seed=17, grid=grid)
    selected = improved_contrast_selection(interferometer_records(photons, ports, slots), bits)

    expected = improved_selected_contrast(getattr(strategy, "m", 0.0), getattr(strategy, "x", 2 / 3))
    if expected == pytest.approx(1.0):
        assert selected.contrast() == pytest.approx(1.0)
    else:
        error = math.sqrt((1 - expected**2) / len(selected))
        assert abs(selected.contrast() - expected) < 5 * error


def test_attack_sweep_rows():
    rows = attack_sweep([0.0, 1.0], [0.5, 2 / 3, 1.0])
    assert len(rows) == 6
    assert {"m", "x", "Q", "I_AE"} <= set(rows[0])
