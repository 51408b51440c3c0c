import math

import numpy as np
import pytest

from services.errors import ConsistencyError, DomainError
from services.models import (
    BellState,
    DetectorModel,
    IdealBell,
    MeasurementPlan,
    OutcomeDistribution,
    QuantumDot,
    Spdc,
    describe_source,
    make_source,
    pattern_clicks,
    pattern_index,
)


def test_pattern_bits_follow_detector_order():
    assert pattern_index(()) == 0
    assert pattern_index(("T_A",)) == 0b1000
    assert pattern_index(("R_B",)) == 0b0001
    assert pattern_index(("R_B", "T_A")) == 0b1001
    assert pattern_clicks(0b1010) == ("T_A", "T_B")
    assert all(pattern_index(pattern_clicks(i)) == i for i in range(16))


def test_unknown_detector_label():
    with pytest.raises(DomainError):
        pattern_index(("X",))


@pytest.mark.parametrize("eta, nu", [(1.2, 0.0), (-0.1, 0.0), (1.0, -1e-3), (float("inf"), 0.0)])
def test_detector_validation(eta, nu):
    with pytest.raises(DomainError):
        DetectorModel(eta=eta, nu=nu)


def test_source_validation():
    with pytest.raises(DomainError):
        QuantumDot(p=1.5)
    with pytest.raises(DomainError):
        Spdc(xi=0.0)
    with pytest.raises(DomainError):
        Spdc(xi=0.3, truncation=0)


def test_common_rotation_invariance():
    assert IdealBell().common_rotation_invariant
    assert Spdc(0.3).common_rotation_invariant
    assert QuantumDot(fss_phase=0.0, p=0.9).common_rotation_invariant
    assert not QuantumDot(fss_phase=0.25).common_rotation_invariant


def test_outcome_distribution_must_sum_to_one():
    probs = np.zeros(16)
    probs[0] = 0.5
    with pytest.raises(ConsistencyError):
        OutcomeDistribution(probs)


def test_outcome_distribution_is_read_only():
    probs = np.zeros(16)
    probs[pattern_index(("T_A", "T_B"))] = 1.0
    dist = OutcomeDistribution(probs)
    assert dist.prob("T_A", "T_B") == 1.0
    assert dist.coincidences() == {"tt": 1.0, "tr": 0.0, "rt": 0.0, "rr": 0.0}
    with pytest.raises(ValueError):
        dist.probs[0] = 1.0


def test_measurement_plan_defaults_and_parsing():
    plan = MeasurementPlan()
    assert plan.angles() == (math.pi / 8, 3 * math.pi / 8, 0.0, math.pi / 4, 0.0)
    parsed = MeasurementPlan.from_angles("0.661,1.248,2.525,3.112")
    assert parsed.theta_b1 == 2.525
    assert parsed.theta_a0 == 0.0
    assert parsed.key_settings().theta_b == 2.525
    assert len(parsed.chsh_settings()) == 4


@pytest.mark.parametrize("angles", ["1,2,3", "1,2,x,4", [1, 2, 3, 4, 5, 6]])
def test_measurement_plan_rejects_bad_angles(angles):
    with pytest.raises(DomainError):
        MeasurementPlan.from_angles(angles)


def test_make_source_round_trip():
    assert make_source("bell", bell="psi-") == IdealBell(BellState.PSI_MINUS)
    assert make_source("qd", fss=0.25, p=0.9) == QuantumDot(0.25, 0.9)
    assert describe_source(make_source("spdc", xi=0.755)) == {"source": "spdc", "xi": 0.755}


@pytest.mark.parametrize("kwargs", [{"kind": "laser"}, {"kind": "spdc"}, {"kind": "bell", "bell": "phi-"}])
def test_make_source_errors(kwargs):
    with pytest.raises(DomainError):
        make_source(**kwargs)
