"""Correlations, the CHSH Bell parameter, QBERs and the combined metrics report."""

from enum import Enum
from functools import lru_cache
import logging
import math
from typing import Optional

from services.binning import bin_distribution
from services.errors import DegenerateInputError, DomainError
from services.fock import FockState, make_source_state, outcome_distribution
from services.gaussian import outcome_distribution_gaussian
from services.models import (
    AnalyzerSettings,
    BinningStrategy,
    DetectorModel,
    KeyRateInput,
    KeyRateResult,
    LogicalDistribution,
    MeasurementPlan,
    MetricsReport,
    OutcomeDistribution,
    SourceModel,
    Spdc,
)
from services.rates import bb84_key_rate, di_key_rate

logger = logging.getLogger(__name__)

# Index of the CHSH term carrying the minus sign, in the order (E11, E12, E21, E22).
# The (a2, b1) placement comes first so it wins ties.
CHSH_PLACEMENTS = (2, 0, 1, 3)


class Backend(str, Enum):
    GAUSSIAN = "gaussian"
    FOCK = "fock"


@lru_cache(maxsize=4)
def _source_state(source: SourceModel, tail: Optional[float]) -> FockState:
    return make_source_state(source, tail)


def outcome_for(
    source: SourceModel,
    detector: DetectorModel,
    settings: AnalyzerSettings,
    backend: Backend = Backend.GAUSSIAN,
    tail: Optional[float] = None,
) -> OutcomeDistribution:
    """
    Click-pattern distribution of a source, dispatched to the right engine.

    SPDC sources use the Gaussian engine unless the Fock backend is requested;
    every other source uses the Fock engine.
    """
    if isinstance(source, Spdc) and Backend(backend) is Backend.GAUSSIAN:
        return outcome_distribution_gaussian(source.xi, detector.eta, detector.nu, settings)
    return outcome_distribution(_source_state(source, tail), settings, detector)


def correlation(logical: LogicalDistribution) -> float:
    """
    E = (P_same - P_diff) / (P_same + P_diff).

    Raises:
        DegenerateInputError: If no probability mass is present
    """
    total = logical.p_same + logical.p_diff
    if total <= 0.0:
        raise DegenerateInputError("logical", logical.as_tuple(), "no events to correlate")
    return (logical.p_same - logical.p_diff) / total


def chsh(correlations) -> tuple:
    """
    Largest |E11 + E12 + E21 + E22| with one term negated.

    Returns:
        tuple: (S, index of the negated term)
    """
    best, placement = -1.0, CHSH_PLACEMENTS[0]
    for minus in CHSH_PLACEMENTS:
        value = abs(sum(-e if i == minus else e for i, e in enumerate(correlations)))
        if value > best:
            best, placement = value, minus
    return best, placement


def correlations(
    source: SourceModel,
    detector: DetectorModel,
    plan: MeasurementPlan,
    strategy: BinningStrategy,
    backend: Backend = Backend.GAUSSIAN,
    tail: Optional[float] = None,
) -> tuple:
    """The four CHSH correlations E11, E12, E21, E22 after binning."""
    return tuple(
        correlation(bin_distribution(outcome_for(source, detector, settings, backend, tail), strategy))
        for settings in plan.chsh_settings()
    )


def bell_parameter(
    source: SourceModel,
    detector: DetectorModel,
    plan: MeasurementPlan,
    strategy: BinningStrategy,
    backend: Backend = Backend.GAUSSIAN,
    tail: Optional[float] = None,
) -> float:
    """CHSH Bell parameter of a source behind the given detectors, angles and binning."""
    value, _ = chsh(correlations(source, detector, plan, strategy, backend, tail))
    return value


def _qber_di_from(logical: LogicalDistribution) -> tuple:
    # Bob flips his bit when the key basis is anti-correlated
    flip = logical.p_same < logical.p_diff
    return max(0.0, min(logical.p_diff, logical.p_same)), flip


def _qber_bb84_from(dist: OutcomeDistribution) -> float:
    raw = dist.coincidences()
    same = raw["tt"] + raw["rr"]
    diff = raw["tr"] + raw["rt"]
    if same + diff <= 0.0:
        raise DegenerateInputError("coincidences", same + diff, "no conclusive events at the key settings")
    return max(0.0, min(same, diff) / (same + diff))


def qber_di(
    source: SourceModel,
    detector: DetectorModel,
    plan: MeasurementPlan,
    strategy: BinningStrategy,
    backend: Backend = Backend.GAUSSIAN,
    tail: Optional[float] = None,
) -> float:
    """Binned error rate at the key settings (theta_a0, theta_b1)."""
    logical = bin_distribution(outcome_for(source, detector, plan.key_settings(), backend, tail), strategy)
    return _qber_di_from(logical)[0]


def qber_bb84(
    source: SourceModel,
    detector: DetectorModel,
    plan: MeasurementPlan,
    backend: Backend = Backend.GAUSSIAN,
    tail: Optional[float] = None,
) -> float:
    """
    Error rate among conclusive events (exactly one click per side) at the key settings.

    Raises:
        DegenerateInputError: If no conclusive event can occur
    """
    return _qber_bb84_from(outcome_for(source, detector, plan.key_settings(), backend, tail))


def evaluate(
    source: SourceModel,
    detector: DetectorModel,
    plan: Optional[MeasurementPlan] = None,
    strategy: BinningStrategy = BinningStrategy.STANDARD,
    backend: Backend = Backend.GAUSSIAN,
    tail: Optional[float] = None,
) -> MetricsReport:
    """
    Bell parameter, both QBERs and both key rates for one configuration.

    The BB84 QBER and rate are NaN when no conclusive event can occur
    (e.g. eta = 0 without dark counts).

    Raises:
        DomainError: On invalid inputs
    """
    plan = plan or MeasurementPlan()
    values = correlations(source, detector, plan, strategy, backend, tail)
    bell_s, placement = chsh(values)
    key_dist = outcome_for(source, detector, plan.key_settings(), backend, tail)
    q_di, flip = _qber_di_from(bin_distribution(key_dist, strategy))
    try:
        q_bb84 = _qber_bb84_from(key_dist)
        rate_bb84 = bb84_key_rate(q_bb84)
    except DegenerateInputError as e:
        logger.warning("No BB84 estimate for %s behind %s: %s", source, detector, e)
        q_bb84, rate_bb84 = math.nan, KeyRateResult(math.nan)
    logger.debug("Evaluated %s: S=%.6g Q_DI=%.6g Q_BB84=%.6g", source, bell_s, q_di, q_bb84)
    try:
        rate_di = di_key_rate(KeyRateInput(q_di, bell_s))
    except DomainError:
        logger.error("Bell parameter %.15g outside the quantum bound for %s", bell_s, source)
        raise
    return MetricsReport(
        bell_s=bell_s,
        qber_di=q_di,
        qber_bb84=q_bb84,
        correlations=values,
        chsh_placement=placement,
        key_flip=flip,
        rate_di=rate_di,
        rate_bb84=rate_bb84,
    )
