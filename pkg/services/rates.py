"""Binary entropy and Devetak-Winter key rates for DI-QKD and entanglement-based BB84."""

from functools import lru_cache
import logging
import math
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from services.errors import DomainError
from services.models import TSIRELSON, KeyRateInput, KeyRateResult

logger = logging.getLogger(__name__)


def binary_entropy(q: float) -> float:
    """
    Binary entropy h(q) in bits, with 0*log2(0) = 0 at both endpoints.

    Args:
        q (float): Probability in [0, 1]

    Returns:
        float: h(q)

    Raises:
        DomainError: If q lies outside [0, 1]
    """
    if not (0.0 <= q <= 1.0):
        raise DomainError("q", q, "binary entropy needs a probability in [0, 1]")
    if q == 0.0 or q == 1.0:
        return 0.0
    return float(-(1.0 - q) * np.log2(1.0 - q) - q * np.log2(q))


def eve_information(bell_s: float) -> float:
    """
    Eve's Holevo term h((1 + sqrt((S/2)^2 - 1))/2) of the DI bound.

    Without a Bell violation (S <= 2) Eve is unconstrained and the term is 1.
    """
    if bell_s <= 2.0:
        return 1.0
    root = math.sqrt((bell_s / 2.0) ** 2 - 1.0)
    return binary_entropy(min(1.0, (1.0 + root) / 2.0))


def di_key_rate(key_input: KeyRateInput) -> KeyRateResult:
    """
    Devetak-Winter lower bound for DI-QKD: 1 - h(Q) - h((1 + sqrt((S/2)^2 - 1))/2).

    Args:
        key_input (KeyRateInput): QBER and Bell parameter

    Returns:
        KeyRateResult: The rate and whether it is positive
    """
    rate = 1.0 - binary_entropy(key_input.qber) - eve_information(key_input.bell_s)
    return KeyRateResult(rate)


def bb84_key_rate(qber: float) -> KeyRateResult:
    """
    Devetak-Winter rate of entanglement-based BB84 in a symmetric channel: 1 - 2h(Q).

    Raises:
        DomainError: If qber lies outside [0, 1/2]
    """
    if not (0.0 <= qber <= 0.5):
        raise DomainError("qber", qber, "QBER must lie in [0, 1/2]")
    return KeyRateResult(1.0 - 2.0 * binary_entropy(qber))


@lru_cache(maxsize=1)
def bb84_qber_threshold() -> float:
    """Largest QBER with a non-negative BB84 rate (~11%)."""
    return brentq(lambda q: bb84_key_rate(q).rate, 1e-6, 0.5 - 1e-12, xtol=1e-14)


@lru_cache(maxsize=1)
def di_qber_threshold() -> float:
    """
    Largest QBER with a non-negative DI rate when S follows the depolarizing
    relation S = 2*sqrt(2)*(1 - 2Q).
    """

    def rate(q: float) -> float:
        return di_key_rate(KeyRateInput(q, TSIRELSON * (1.0 - 2.0 * q))).rate

    return brentq(rate, 1e-9, 0.25, xtol=1e-14)


def bell_threshold() -> float:
    """Bell parameter matching di_qber_threshold under the depolarizing relation."""
    return TSIRELSON * (1.0 - 2.0 * di_qber_threshold())


def di_bell_threshold(qber: float) -> Optional[float]:
    """
    Smallest Bell parameter giving a non-negative DI rate at the given QBER.

    Args:
        qber (float): QBER in [0, 1/2]

    Returns:
        Optional[float]: The threshold, or None if even S = 2*sqrt(2) is insufficient
    """

    def rate(s: float) -> float:
        return di_key_rate(KeyRateInput(qber, s)).rate

    if rate(TSIRELSON) < 0.0:
        logger.debug("No Bell threshold at QBER %.6g: rate negative at maximal violation", qber)
        return None
    if rate(2.0) >= 0.0:
        return 2.0
    return brentq(rate, 2.0, TSIRELSON, xtol=1e-14)
