import math

import pytest

from services.models import DetectorModel, MeasurementPlan

ROOT2 = math.sqrt(2.0)
TSIRELSON = 2.0 * ROOT2
FIGURE2_ANGLES = (0.661, 1.248, 2.525, 3.112)


@pytest.fixture
def ideal_detector():
    return DetectorModel(eta=1.0, nu=0.0)


@pytest.fixture
def default_plan():
    return MeasurementPlan()


@pytest.fixture
def figure2_plan():
    return MeasurementPlan.from_angles(FIGURE2_ANGLES)


def qd_bell_closed_form(fss: float, p: float, eta: float, nu: float) -> float:
    return ROOT2 * (1.0 + math.cos(fss)) * math.exp(-2.0 * nu) * p * eta**2


def qd_qber_closed_form(p: float, eta: float, nu: float) -> float:
    return (1.0 - math.exp(-2.0 * nu) * p * eta**2) / 2.0


def angle_distance(x: float, y: float, period: float = math.pi) -> float:
    d = (x - y) % period
    return min(d, period - d)


def equivalent_angles(found, reference, tol: float = 0.03) -> bool:
    """
    True when `found` maps onto `reference` under a common shift, pi-periodicity,
    swapping a1/a2, swapping b1/b2, global reflection or exchanging the parties.
    """

    def relative(angles):
        a1, a2, b1, b2 = angles
        return a1 - b1, a2 - b1, b2 - b1

    target = relative(reference)
    for swap_a in (False, True):
        for swap_b in (False, True):
            for sign in (1.0, -1.0):
                for exchange in (False, True):
                    a1, a2, b1, b2 = (sign * x for x in found)
                    if swap_a:
                        a1, a2 = a2, a1
                    if swap_b:
                        b1, b2 = b2, b1
                    if exchange:
                        a1, a2, b1, b2 = b1, b2, a1, a2
                    diffs = relative((a1, a2, b1, b2))
                    if all(angle_distance(d, t) < tol for d, t in zip(diffs, target)):
                        return True
    return False
