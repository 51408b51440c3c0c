from dataclasses import replace
import itertools
import math

import numpy as np
import pytest

from services.errors import DegenerateInputError
from services.metrics import (
    Backend,
    bell_parameter,
    chsh,
    correlations,
    evaluate,
    outcome_for,
    qber_bb84,
    qber_di,
)
from services.models import (
    AnalyzerSettings,
    BellState,
    BinningStrategy,
    DetectorModel,
    IdealBell,
    MeasurementPlan,
    QuantumDot,
    Spdc,
)
from tests.conftest import TSIRELSON, qd_bell_closed_form, qd_qber_closed_form

QD_GRID = list(
    itertools.product(np.linspace(0.7, 1.0, 5), np.linspace(0.8, 1.0, 5), [0.0, 1e-3, 1e-2])
)


def test_ideal_bell_state_reaches_tsirelson(ideal_detector, default_plan):
    report = evaluate(IdealBell(), ideal_detector, default_plan)
    assert report.bell_s == pytest.approx(TSIRELSON, abs=1e-12)
    assert report.qber_di == pytest.approx(0.0, abs=1e-12)
    assert report.qber_bb84 == pytest.approx(0.0, abs=1e-12)
    assert report.rate_di.rate == pytest.approx(1.0, abs=1e-9)
    assert report.rate_bb84.rate == pytest.approx(1.0, abs=1e-9)
    assert report.chsh_placement == 2
    assert not report.key_flip


def test_singlet_flips_the_key(ideal_detector, default_plan):
    report = evaluate(IdealBell(BellState.PSI_MINUS), ideal_detector, default_plan)
    assert report.bell_s == pytest.approx(TSIRELSON, abs=1e-12)
    assert report.qber_di == pytest.approx(0.0, abs=1e-12)
    assert report.key_flip


@pytest.mark.parametrize("p, eta, nu", QD_GRID)
def test_quantum_dot_closed_forms(p, eta, nu, default_plan):
    source = QuantumDot(fss_phase=0.0, p=p)
    detector = DetectorModel(eta, nu)
    bell_s = bell_parameter(source, detector, default_plan, BinningStrategy.STANDARD)
    q = qber_di(source, detector, default_plan, BinningStrategy.STANDARD)
    assert bell_s == pytest.approx(qd_bell_closed_form(0.0, p, eta, nu), abs=1e-10)
    assert q == pytest.approx(qd_qber_closed_form(p, eta, nu), abs=1e-10)
    # depolarizing relation between S and Q
    assert bell_s == pytest.approx(TSIRELSON * (1.0 - 2.0 * q), abs=1e-10)


@pytest.mark.parametrize("p, eta, nu", [(0.9, 0.95, 1e-3), (1.0, 0.85, 0.0), (0.75, 1.0, 1e-2)])
def test_fine_structure_only_changes_the_bell_parameter(p, eta, nu, default_plan):
    detector = DetectorModel(eta, nu)
    reference = evaluate(QuantumDot(0.0, p), detector, default_plan)
    for fss in (0.0, 0.1, 0.25, 0.5):
        report = evaluate(QuantumDot(fss, p), detector, default_plan)
        assert report.qber_di == pytest.approx(reference.qber_di, abs=1e-12)
        assert report.qber_bb84 == pytest.approx(reference.qber_bb84, abs=1e-12)
        assert report.bell_s == pytest.approx(qd_bell_closed_form(fss, p, eta, nu), abs=1e-10)


def test_bb84_qber_of_depolarized_dot(default_plan):
    # without dark counts only the white-noise fraction errs
    q = qber_bb84(QuantumDot(0.25, 0.9), DetectorModel(0.8, 0.0), default_plan)
    assert q == pytest.approx(0.05, abs=1e-12)


def test_security_regime_needs_near_unit_efficiency(default_plan):
    source = QuantumDot(0.0, 0.9)
    high = evaluate(source, DetectorModel(0.99, 1e-3), default_plan)
    low = evaluate(source, DetectorModel(0.85, 1e-3), default_plan)
    assert 0.11 < high.rate_di.rate < 0.125
    assert high.rate_di.secure
    assert low.rate_di.rate < 0.0
    assert low.rate_bb84.secure


def test_spdc_never_violates_with_standard_binning(ideal_detector, default_plan):
    for xi in np.linspace(1.5 / 200, 1.5, 200):
        assert bell_parameter(Spdc(float(xi)), ideal_detector, default_plan, BinningStrategy.STANDARD) < 2.0


def test_transmitted_only_binning_violates_at_optimized_angles(ideal_detector, figure2_plan):
    values = correlations(Spdc(0.755), ideal_detector, figure2_plan, BinningStrategy.TRANSMITTED_ONLY)
    bell_s, placement = chsh(values)
    assert bell_s == pytest.approx(2.30083, abs=1e-3)
    assert placement == 1


def test_backends_agree_on_spdc_metrics(figure2_plan):
    detector = DetectorModel(0.9, 1e-3)
    gaussian = evaluate(Spdc(0.4), detector, figure2_plan, BinningStrategy.TRANSMITTED_ONLY, Backend.GAUSSIAN)
    fock = evaluate(Spdc(0.4), detector, figure2_plan, BinningStrategy.TRANSMITTED_ONLY, Backend.FOCK)
    assert fock.bell_s == pytest.approx(gaussian.bell_s, abs=1e-8)
    assert fock.qber_di == pytest.approx(gaussian.qber_di, abs=1e-8)
    assert fock.qber_bb84 == pytest.approx(gaussian.qber_bb84, abs=1e-8)


def test_spdc_qber_stays_in_rate_domain(ideal_detector, default_plan):
    report = evaluate(Spdc(0.8), ideal_detector, default_plan)
    assert 0.0 <= report.qber_di <= 0.5
    assert 0.0 <= report.qber_bb84 <= 0.5
    assert report.key_flip


def test_chsh_takes_the_best_sign_placement():
    assert chsh((0.5, 0.5, -0.5, 0.5)) == (2.0, 2)
    assert chsh((0.5, -0.5, 0.5, 0.5)) == (2.0, 1)
    assert chsh((1.0, 1.0, 1.0, 1.0)) == (2.0, 2)


def test_bb84_qber_without_conclusive_events(default_plan):
    with pytest.raises(DegenerateInputError):
        qber_bb84(QuantumDot(), DetectorModel(eta=0.0, nu=0.0), default_plan)


def test_fock_backend_only_for_spdc_choice():
    settings = AnalyzerSettings(0.3, 0.2)
    a = outcome_for(QuantumDot(0.25, 0.9), DetectorModel(0.9, 1e-3), settings, Backend.GAUSSIAN)
    b = outcome_for(QuantumDot(0.25, 0.9), DetectorModel(0.9, 1e-3), settings, Backend.FOCK)
    np.testing.assert_array_equal(a.probs, b.probs)


def test_report_serializes(ideal_detector):
    data = evaluate(QuantumDot(), ideal_detector, MeasurementPlan()).to_dict()
    assert set(data) >= {"bell_s", "qber_di", "qber_bb84", "rate_di", "rate_bb84", "secure_di", "key_flip"}
    assert len(data["correlations"]) == 4
    assert math.isfinite(data["rate_bb84"])


@pytest.mark.parametrize(
    "source",
    [IdealBell(), IdealBell(BellState.PSI_MINUS), QuantumDot(0.25, 0.9), Spdc(0.3), Spdc(0.755)],
)
@pytest.mark.parametrize("strategy", list(BinningStrategy))
def test_bell_parameter_respects_tsirelson_bound(source, strategy):
    rng = np.random.default_rng(3)
    for detector in (DetectorModel(1.0, 0.0), DetectorModel(0.8, 1e-2)):
        for _ in range(5):
            plan = MeasurementPlan.from_angles(tuple(rng.uniform(0.0, math.pi, 4)))
            assert bell_parameter(source, detector, plan, strategy) <= TSIRELSON + 1e-9


def test_bell_parameter_grows_with_survival_efficiency_and_darkness(default_plan):
    def bell(p=0.9, eta=0.95, nu=1e-3):
        return bell_parameter(QuantumDot(0.25, p), DetectorModel(eta, nu), default_plan, BinningStrategy.STANDARD)

    grid = np.linspace(0.5, 1.0, 6)
    assert (np.diff([bell(p=float(p)) for p in grid]) >= 0.0).all()
    assert (np.diff([bell(eta=float(eta)) for eta in grid]) >= 0.0).all()
    # nu decreasing along the grid means e^{-2 nu} increasing
    assert (np.diff([bell(nu=float(nu)) for nu in np.linspace(0.05, 0.0, 6)]) >= 0.0).all()


@pytest.mark.parametrize("name", ["theta_a1", "theta_a2", "theta_b1", "theta_b2"])
@pytest.mark.parametrize("step", [-0.05, 0.05])
def test_default_angles_are_locally_optimal(name, step, default_plan):
    source, detector = QuantumDot(0.0, 0.9), DetectorModel(0.95, 1e-3)
    best = bell_parameter(source, detector, default_plan, BinningStrategy.STANDARD)
    moved = replace(default_plan, **{name: getattr(default_plan, name) + step})
    assert bell_parameter(source, detector, moved, BinningStrategy.STANDARD) < best


def test_no_conclusive_events_leave_bb84_undefined(default_plan):
    report = evaluate(QuantumDot(), DetectorModel(eta=0.0, nu=0.0), default_plan)
    assert report.bell_s == pytest.approx(0.0, abs=1e-12)
    assert report.qber_di == pytest.approx(0.5, abs=1e-12)
    assert report.rate_di.rate == pytest.approx(-1.0, abs=1e-12)
    assert math.isnan(report.qber_bb84)
    assert math.isnan(report.rate_bb84.rate)
    assert not report.rate_bb84.secure
