"""Binning of the 16 click patterns into the four logical outcomes (tt, tr, rt, rr)."""

import numpy as np

from services.models import BinningStrategy, LogicalDistribution, OutcomeDistribution, pattern_clicks, pattern_index

# Non-conclusive events split evenly over all four outcomes.
_EVEN_SPLIT = [(), ("T_A", "R_A", "T_B", "R_B"), ("T_A", "R_A"), ("T_B", "R_B")]

# outcome -> (coincidence, events shared with one other outcome at weight 1/2)
_STANDARD_RULES = {
    "tt": (("T_A", "T_B"), [("T_A",), ("T_B",), ("T_A", "T_B", "R_A"), ("T_A", "T_B", "R_B")]),
    "tr": (("T_A", "R_B"), [("T_A",), ("R_B",), ("T_A", "R_B", "T_B"), ("T_A", "R_B", "R_A")]),
    "rt": (("R_A", "T_B"), [("R_A",), ("T_B",), ("R_A", "T_B", "T_A"), ("R_A", "T_B", "R_B")]),
    "rr": (("R_A", "R_B"), [("R_A",), ("R_B",), ("R_A", "R_B", "T_A"), ("R_A", "R_B", "T_B")]),
}
_OUTCOMES = ("tt", "tr", "rt", "rr")


def _standard_matrix() -> np.ndarray:
    matrix = np.zeros((4, 16))
    for row, outcome in enumerate(_OUTCOMES):
        coincidence, halves = _STANDARD_RULES[outcome]
        matrix[row, pattern_index(coincidence)] += 1.0
        for clicks in _EVEN_SPLIT:
            matrix[row, pattern_index(clicks)] += 0.25
        for clicks in halves:
            matrix[row, pattern_index(clicks)] += 0.5
    return matrix


def _side_is_transmitted(clicks: tuple, side: str) -> bool:
    return f"T_{side}" in clicks and f"R_{side}" not in clicks


def _transmitted_only_matrix() -> np.ndarray:
    # outcome -1 only for a clean transmitted click; no-click, R-click and double-click give +1
    matrix = np.zeros((4, 16))
    for index in range(16):
        clicks = pattern_clicks(index)
        a_minus = _side_is_transmitted(clicks, "A")
        b_minus = _side_is_transmitted(clicks, "B")
        row = {(True, True): 0, (True, False): 1, (False, True): 2, (False, False): 3}[(a_minus, b_minus)]
        matrix[row, index] = 1.0
    return matrix


STANDARD_MATRIX = _standard_matrix()
TRANSMITTED_ONLY_MATRIX = _transmitted_only_matrix()


def _apply(matrix: np.ndarray, dist: OutcomeDistribution) -> LogicalDistribution:
    p_tt, p_tr, p_rt, p_rr = matrix @ dist.probs
    return LogicalDistribution(float(p_tt), float(p_tr), float(p_rt), float(p_rr))


def bin_standard(dist: OutcomeDistribution) -> LogicalDistribution:
    """
    Symmetric binning: coincidences pass through, no-clicks, four-fold and
    same-side double clicks add 1/4 to every outcome, single and triple clicks
    add 1/2 to the two outcomes consistent with them.

    Raises:
        ConsistencyError: If the result does not sum to 1
    """
    return _apply(STANDARD_MATRIX, dist)


def bin_transmitted_only(dist: OutcomeDistribution) -> LogicalDistribution:
    """
    Asymmetric binning: a side reports -1 only when its T detector alone clicks.

    Raises:
        ConsistencyError: If the result does not sum to 1
    """
    return _apply(TRANSMITTED_ONLY_MATRIX, dist)


def bin_distribution(dist: OutcomeDistribution, strategy: BinningStrategy) -> LogicalDistribution:
    if BinningStrategy(strategy) is BinningStrategy.STANDARD:
        return bin_standard(dist)
    return bin_transmitted_only(dist)
