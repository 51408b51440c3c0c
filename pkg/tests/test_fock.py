import math

import numpy as np
import pytest

from services.errors import DomainError, NumericalError, TruncationError
from services.fock import (
    FockState,
    apply_analyzers,
    choose_truncation,
    make_source_state,
    maximally_mixed_pair,
    no_click_weight,
    outcome_distribution,
    rotation_matrix,
    tmsv_pair_weights,
    tmsv_tail,
)
from services.models import AnalyzerSettings, BellState, DetectorModel, IdealBell, QuantumDot, Spdc


def test_single_photon_rotation():
    theta = 0.3
    c, s = math.cos(theta), math.sin(theta)
    # columns: V, H photon; rows: R, T photon
    np.testing.assert_allclose(rotation_matrix(1, theta), [[c, -s], [s, c]], atol=1e-14)


@pytest.mark.parametrize("n", [2, 3, 6])
def test_rotation_is_orthogonal(n):
    matrix = rotation_matrix(n, 0.7)
    np.testing.assert_allclose(matrix @ matrix.T, np.eye(n + 1), atol=1e-12)


def test_rotation_by_pi_only_changes_signs():
    matrix = rotation_matrix(3, math.pi)
    np.testing.assert_allclose(np.abs(matrix), np.eye(4), atol=1e-12)


def test_pair_weights_follow_tmsv_statistics():
    weights = tmsv_pair_weights(0.3, 30)
    t2 = math.tanh(0.3) ** 2
    assert weights[0] == pytest.approx(1.0 / math.cosh(0.3) ** 4, rel=1e-9)
    assert weights[1] == pytest.approx(2.0 * t2 / math.cosh(0.3) ** 4, rel=1e-9)
    assert weights[1] == pytest.approx(0.142142, abs=1e-6)
    assert weights.sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("xi", [0.1, 0.6, 1.2])
def test_automatic_truncation_meets_tail(xi):
    n_max = choose_truncation(xi)
    assert tmsv_tail(xi, n_max) < 1e-12
    assert n_max == 1 or tmsv_tail(xi, n_max - 1) >= 1e-12


def test_tail_matches_direct_sum():
    x = math.tanh(0.5) ** 2
    direct = sum((n + 1) * x**n * (1 - x) ** 2 for n in range(6, 400))
    assert tmsv_tail(0.5, 5) == pytest.approx(direct, rel=1e-10)


def test_explicit_truncation_too_small():
    with pytest.raises(TruncationError) as info:
        make_source_state(Spdc(0.5, truncation=2))
    assert info.value.parameter == "truncation"


def test_spdc_state_is_normalized():
    state = make_source_state(Spdc(0.4))
    assert state.is_pure
    distribution = state.photon_number_distribution()
    assert sum(distribution.values()) == pytest.approx(1.0, abs=1e-12)
    assert set(distribution) == {2 * n for n in range(len(state.sectors))}


def test_spdc_pair_signs():
    amplitudes = make_source_state(Spdc(0.3)).amplitudes()
    # one pair: |H_A V_B> - |V_A H_B>
    assert amplitudes[(1, 0, 0, 1)].real > 0.0
    assert amplitudes[(0, 1, 1, 0)] == pytest.approx(-amplitudes[(1, 0, 0, 1)])


def test_analyzers_conserve_photon_numbers():
    state = make_source_state(Spdc(0.5))
    rotated = apply_analyzers(state, AnalyzerSettings(0.4, 1.1))
    before = state.photon_number_distribution()
    after = rotated.photon_number_distribution()
    assert before.keys() == after.keys()
    for n in before:
        assert after[n] == pytest.approx(before[n], abs=1e-12)
    assert rotated.mode_labels == ("T_A", "R_A", "T_B", "R_B")


def test_analyzers_apply_once():
    rotated = apply_analyzers(make_source_state(IdealBell()), AnalyzerSettings(0.0, 0.0))
    with pytest.raises(DomainError):
        apply_analyzers(rotated, AnalyzerSettings(0.0, 0.0))


def test_phi_plus_coincidences():
    dist = outcome_distribution(make_source_state(IdealBell()), AnalyzerSettings(0.0, 0.0), DetectorModel())
    assert dist.coincidences() == pytest.approx({"tt": 0.5, "tr": 0.0, "rt": 0.0, "rr": 0.5}, abs=1e-14)


def test_psi_minus_coincidences():
    source = IdealBell(BellState.PSI_MINUS)
    dist = outcome_distribution(make_source_state(source), AnalyzerSettings(0.0, 0.0), DetectorModel())
    assert dist.coincidences() == pytest.approx({"tt": 0.0, "tr": 0.5, "rt": 0.5, "rr": 0.0}, abs=1e-14)


@pytest.mark.parametrize("delta", [0.1, 0.5, 1.3])
def test_phi_plus_correlation_is_malus(delta):
    dist = outcome_distribution(make_source_state(IdealBell()), AnalyzerSettings(delta, 0.0), DetectorModel())
    c = dist.coincidences()
    assert c["tt"] + c["rr"] - c["tr"] - c["rt"] == pytest.approx(math.cos(2 * delta), abs=1e-12)


def test_depolarized_dot_is_mixed():
    state = make_source_state(QuantumDot(fss_phase=0.25, p=0.9))
    assert not state.is_pure
    assert np.trace(state.density).real == pytest.approx(1.0)
    with pytest.raises(DomainError):
        state.amplitudes()


def test_fully_depolarized_dot_is_maximally_mixed():
    state = make_source_state(QuantumDot(p=0.0))
    np.testing.assert_allclose(state.density, maximally_mixed_pair().density, atol=1e-15)


def test_vacuum_dark_counts():
    vacuum = FockState(sectors=((0, 0),), blocks=(np.ones((1, 1), dtype=complex),))
    nu = 0.01
    dist = outcome_distribution(vacuum, AnalyzerSettings(0.2, 0.9), DetectorModel(eta=0.8, nu=nu))
    assert dist.prob() == pytest.approx(math.exp(-4 * nu), abs=1e-14)
    assert dist.prob("T_A") == pytest.approx((1 - math.exp(-nu)) * math.exp(-3 * nu), abs=1e-14)


def test_zero_efficiency_never_clicks():
    dist = outcome_distribution(make_source_state(Spdc(0.6)), AnalyzerSettings(0.3, 0.1), DetectorModel(eta=0.0))
    assert dist.prob() == pytest.approx(1.0, abs=1e-12)


def test_no_click_weight_needs_output_modes():
    state = make_source_state(IdealBell())
    with pytest.raises(DomainError):
        no_click_weight(state, ["T_A"], DetectorModel())
    rotated = apply_analyzers(state, AnalyzerSettings(0.0, 0.0))
    assert no_click_weight(rotated, ["T_A"], DetectorModel(eta=1.0)) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        no_click_weight(rotated, ["H_A"], DetectorModel())


def test_state_validation():
    with pytest.raises(NumericalError):
        FockState(sectors=((1, 1),), blocks=(np.ones((2, 2), dtype=complex),))
    with pytest.raises(DomainError):
        FockState(sectors=((1, 1),), blocks=(np.ones((3, 2), dtype=complex) / math.sqrt(6),))
    with pytest.raises(DomainError):
        FockState(sectors=((1, 1),))


@pytest.mark.parametrize("source", [IdealBell(), QuantumDot(fss_phase=0.25, p=0.8), Spdc(0.4)])
def test_half_turn_of_an_analyzer_changes_nothing(source):
    state = make_source_state(source)
    detector = DetectorModel(eta=0.9, nu=1e-3)
    reference = outcome_distribution(state, AnalyzerSettings(0.3, 1.1), detector)
    for settings in (AnalyzerSettings(0.3 + math.pi, 1.1), AnalyzerSettings(0.3, 1.1 - math.pi)):
        shifted = outcome_distribution(state, settings, detector)
        np.testing.assert_allclose(shifted.probs, reference.probs, rtol=0.0, atol=1e-12)


@pytest.mark.parametrize("p", [0.0, 0.3, 0.9])
def test_dot_distribution_is_linear_in_survival(p):
    settings, detector = AnalyzerSettings(0.4, 1.3), DetectorModel(eta=0.85, nu=1e-2)
    pure = outcome_distribution(make_source_state(QuantumDot(0.25, 1.0)), settings, detector)
    mixed = outcome_distribution(maximally_mixed_pair(), settings, detector)
    dot = outcome_distribution(make_source_state(QuantumDot(0.25, p)), settings, detector)
    np.testing.assert_allclose(dot.probs, p * pure.probs + (1.0 - p) * mixed.probs, rtol=0.0, atol=1e-13)
