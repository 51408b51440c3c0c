"""
Truncation-free SPDC statistics from the Gaussian (characteristic-function) picture.

The TMSV has <a_i^+ a_i> = sinh^2 xi in every input mode and pair correlations
<a_{H_A} a_{V_B}> = sinh xi cosh xi, <a_{V_A} a_{H_B}> = -sinh xi cosh xi.
For a subset M of output ports the normally ordered no-click expectation is

    W(M) = e^{-|M| nu} det(I + eta Gamma_M)^{-1/2}
         = e^{-|M| nu} eta^{-|M|} det(Gamma_M + I/eta)^{-1/2},

where Gamma_M is the (alpha, alpha*) covariance restricted to M. The second
form is the 1/eta-shifted block whose diagonal is the zeta of the closed form.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np

from services.errors import DomainError, NumericalError
from services.models import AnalyzerSettings, DetectorModel, LogicalDistribution, OutcomeDistribution
from services.povm import MASK_BITS, click_probabilities, dark_count_factors, to_distribution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpdcClosedFormParams:
    """zeta, gamma and lambda of the closed-form coincidences, plus the efficiency they were built with."""

    zeta: float
    gamma: float
    lam: float
    eta: float

    def __post_init__(self):
        if not (self.zeta > abs(self.gamma) and self.zeta > abs(self.lam)):
            raise NumericalError(f"zeta={self.zeta} must dominate |gamma|={self.gamma} and |lambda|={self.lam}")


def _check_inputs(xi: float, eta: float):
    if not (math.isfinite(xi) and xi > 0.0):
        raise DomainError("xi", xi, "squeezing parameter must be positive")
    if eta == 0.0:
        raise DomainError("eta", eta, "the closed form diverges at zero efficiency")
    if not 0.0 < eta <= 1.0:
        raise DomainError("eta", eta, "detection efficiency must lie in (0, 1]")


def closed_form_params(xi: float, eta: float, theta_a: float, theta_b: float) -> SpdcClosedFormParams:
    """
    Builds zeta = tanh^2/(1 - tanh^2) + 1/eta, gamma = tanh/(1 - tanh^2) sin(dA - dB)
    and lambda = tanh/(1 - tanh^2) cos(dA - dB).

    Raises:
        DomainError: If xi <= 0 or eta is not in (0, 1]
    """
    _check_inputs(xi, eta)
    t = math.tanh(xi)
    denominator = 1.0 - t * t
    coupling = t / denominator
    delta = theta_a - theta_b
    return SpdcClosedFormParams(
        zeta=t * t / denominator + 1.0 / eta,
        gamma=coupling * math.sin(delta),
        lam=coupling * math.cos(delta),
        eta=eta,
    )


def correlation_closed_form(params: SpdcClosedFormParams, nu: float) -> float:
    """E = P_same - P_diff = (2 e^{-2 nu} / eta^2) [1/(zeta^2 - gamma^2) - 1/(zeta^2 - lambda^2)]."""
    zeta2 = params.zeta**2
    bracket = 1.0 / (zeta2 - params.gamma**2) - 1.0 / (zeta2 - params.lam**2)
    return 2.0 * math.exp(-2.0 * nu) / params.eta**2 * bracket


def binned_coincidences_closed_form(params: SpdcClosedFormParams, nu: float) -> LogicalDistribution:
    """
    Standard-binned coincidences of the TMSV in closed form.

    Returns:
        LogicalDistribution: p_tt = p_rr = 1/4 + E/4 and p_tr = p_rt = 1/4 - E/4
    """
    if nu < 0.0:
        raise DomainError("nu", nu, "dark-count parameter must be non-negative")
    quarter_e = correlation_closed_form(params, nu) / 4.0
    return LogicalDistribution(0.25 + quarter_e, 0.25 - quarter_e, 0.25 - quarter_e, 0.25 + quarter_e)


def analyzer_matrix(settings: AnalyzerSettings) -> np.ndarray:
    """a_out = R a_in with outputs (T_A, R_A, T_B, R_B) and inputs (H_A, V_A, H_B, V_B)."""

    def side(theta: float) -> np.ndarray:
        c, s = math.cos(theta), math.sin(theta)
        return np.array([[c, s], [-s, c]])

    matrix = np.zeros((4, 4))
    matrix[:2, :2] = side(settings.theta_a)
    matrix[2:, 2:] = side(settings.theta_b)
    return matrix


def tmsv_moments(xi: float) -> tuple:
    """Input-mode moments N_ij = <a_j^+ a_i> and M_ij = <a_i a_j>."""
    occupation = math.sinh(xi) ** 2
    pair = math.sinh(xi) * math.cosh(xi)
    n_matrix = occupation * np.eye(4)
    m_matrix = np.zeros((4, 4))
    m_matrix[0, 3] = m_matrix[3, 0] = pair
    m_matrix[1, 2] = m_matrix[2, 1] = -pair
    return n_matrix, m_matrix


def output_covariance(xi: float, settings: AnalyzerSettings) -> np.ndarray:
    """The 8x8 normally ordered covariance [[N, M], [M*, N*]] of the output modes."""
    rotation = analyzer_matrix(settings)
    n_in, m_in = tmsv_moments(xi)
    n_out = rotation @ n_in @ rotation.T
    m_out = rotation @ m_in @ rotation.T
    return np.block([[n_out, m_out], [m_out.conj(), n_out.conj()]])


def no_click_weights(xi: float, detector: DetectorModel, settings: AnalyzerSettings) -> np.ndarray:
    """
    No-click weights W(M) for all 16 subsets, evaluated in one batched determinant.

    Raises:
        NumericalError: If a determinant is not positive
    """
    covariance = output_covariance(xi, settings)
    selectors = np.hstack([MASK_BITS, MASK_BITS]).astype(float)
    matrices = np.eye(8)[None, :, :] + detector.eta * covariance[None, :, :] * selectors[:, None, :]
    determinants = np.linalg.det(matrices)
    if np.any(determinants <= 0.0):
        raise NumericalError(f"non-positive Gaussian determinant {determinants.min():.3e}")
    return dark_count_factors(detector.nu) / np.sqrt(determinants)


def outcome_distribution_gaussian(xi: float, eta: float, nu: float, settings: AnalyzerSettings) -> OutcomeDistribution:
    """
    All 16 click-pattern probabilities of the TMSV behind the analyzers.

    Args:
        xi (float): Squeezing parameter, > 0
        eta (float): Detection efficiency in (0, 1]
        nu (float): Dark-count parameter, >= 0
        settings (AnalyzerSettings): Analyzer angles

    Returns:
        OutcomeDistribution: Must agree with the Fock engine
    """
    _check_inputs(xi, eta)
    detector = DetectorModel(eta, nu)
    return to_distribution(click_probabilities(no_click_weights(xi, detector, settings)))
