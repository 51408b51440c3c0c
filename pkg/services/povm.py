"""
On/off detection shared by both engines.

A no-click weight is Tr[rho :exp(-eta sum_{i in M} n_i - |M| nu):] for a subset M
of the four output ports. Subsets and click patterns share one 4-bit encoding
(T_A, R_A, T_B, R_B, most significant first), so weights[m] is the weight of
"no detector in m clicks".
"""

import logging

import numpy as np

from config.settings import config
from services.errors import NumericalError
from services.models import OUTPUT_MODES, OutcomeDistribution

logger = logging.getLogger(__name__)

# MASK_BITS[m, i] = 1 if mode OUTPUT_MODES[i] belongs to subset m
MASK_BITS = np.array(
    [[(m >> (3 - i)) & 1 for i in range(len(OUTPUT_MODES))] for m in range(16)],
    dtype=int,
)
MASK_SIZES = MASK_BITS.sum(axis=1)
FULL_MASK = 0b1111


def _inclusion_exclusion_matrix() -> np.ndarray:
    # P(clicks = C) = sum_{U subset C} (-1)^{|U|} W(U | Z),  Z = complement of C
    matrix = np.zeros((16, 16))
    for clicks in range(16):
        silent = FULL_MASK ^ clicks
        sub = clicks
        while True:
            matrix[clicks, sub | silent] += (-1) ** bin(sub).count("1")
            if sub == 0:
                break
            sub = (sub - 1) & clicks
    return matrix


INCLUSION_EXCLUSION = _inclusion_exclusion_matrix()


def dark_count_factors(nu: float) -> np.ndarray:
    """e^{-|M| nu} for every subset M."""
    return np.exp(-nu * MASK_SIZES)


def click_probabilities(no_click_weights: np.ndarray) -> np.ndarray:
    """
    Turns the 16 no-click weights into the 16 click-pattern probabilities.

    Args:
        no_click_weights (np.ndarray): weights[m] for every subset mask m

    Returns:
        np.ndarray: probabilities indexed by click pattern
    """
    return INCLUSION_EXCLUSION @ np.asarray(no_click_weights, dtype=float)


def to_distribution(probs: np.ndarray) -> OutcomeDistribution:
    """
    Clips round-off below zero and wraps the result.

    Raises:
        NumericalError: If a probability is negative beyond the tolerance
    """
    probs = np.asarray(probs, dtype=float)
    tol = config.negative_probability_tolerance
    worst = probs.min()
    if worst < -tol:
        raise NumericalError(f"negative click probability {worst:.3e}")
    if worst < 0.0:
        logger.debug("Clipping round-off %.3e to zero", worst)
        probs = np.clip(probs, 0.0, None)
    return OutcomeDistribution(probs)
