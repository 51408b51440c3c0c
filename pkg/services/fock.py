"""
Exact photodetection statistics in a truncated four-mode Fock space.

States are stored per photon-number sector (N_A, N_B). Inside a sector the basis
is |j_A, N_A - j_A> x |j_B, N_B - j_B>, with j counting photons in the first
mode of a side (H before the analyzers, T after them), flattened as
j_A * (N_B + 1) + j_B.
"""

from dataclasses import dataclass
from functools import lru_cache
import logging
import math
from typing import Iterable, Optional

import numpy as np
from scipy.linalg import block_diag, expm

from config.settings import config
from services.errors import DomainError, NumericalError, TruncationError
from services.models import (
    INPUT_MODES,
    OUTPUT_MODES,
    AnalyzerSettings,
    BellState,
    DetectorModel,
    IdealBell,
    OutcomeDistribution,
    QuantumDot,
    SourceModel,
    Spdc,
)
from services.povm import MASK_BITS, click_probabilities, dark_count_factors, to_distribution

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-12


def _sector_occupations(n_a: int, n_b: int) -> np.ndarray:
    j_a, j_b = np.meshgrid(np.arange(n_a + 1), np.arange(n_b + 1), indexing="ij")
    j_a, j_b = j_a.ravel(), j_b.ravel()
    return np.stack([j_a, n_a - j_a, j_b, n_b - j_b], axis=1)


@dataclass(frozen=True, eq=False)
class FockState:
    """
    A pure or mixed four-mode state.

    Attributes:
        sectors (tuple): Photon numbers (N_A, N_B) of each sector
        blocks (Optional[tuple]): Pure state, one (N_A+1, N_B+1) amplitude matrix per sector
        density (Optional[np.ndarray]): Mixed state over the concatenated sector bases
        output_modes (bool): True once the analyzers have been applied
    """

    sectors: tuple
    blocks: Optional[tuple] = None
    density: Optional[np.ndarray] = None
    output_modes: bool = False

    def __post_init__(self):
        if (self.blocks is None) == (self.density is None):
            raise DomainError("state", None, "exactly one of blocks or density must be given")
        if self.blocks is not None:
            for (n_a, n_b), block in zip(self.sectors, self.blocks):
                if block.shape != (n_a + 1, n_b + 1):
                    raise DomainError("blocks", block.shape, f"sector {(n_a, n_b)} has the wrong shape")
            norm = sum(float(np.vdot(b, b).real) for b in self.blocks)
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise NumericalError(f"state norm {norm:.15g} differs from 1")
        else:
            rho = self.density
            if rho.shape != (self.dimension, self.dimension):
                raise DomainError("density", rho.shape, "does not match the sector basis")
            if not np.allclose(rho, rho.conj().T, atol=NORM_TOLERANCE):
                raise NumericalError("density matrix is not Hermitian")
            if abs(np.trace(rho).real - 1.0) > NORM_TOLERANCE:
                raise NumericalError(f"density matrix trace {np.trace(rho).real:.15g} differs from 1")

    @property
    def is_pure(self) -> bool:
        return self.blocks is not None

    @property
    def dimension(self) -> int:
        return sum((n_a + 1) * (n_b + 1) for n_a, n_b in self.sectors)

    @property
    def mode_labels(self) -> tuple:
        return OUTPUT_MODES if self.output_modes else INPUT_MODES

    def occupations(self) -> np.ndarray:
        """Occupation numbers of every basis state, shape (dimension, 4)."""
        return np.concatenate([_sector_occupations(n_a, n_b) for n_a, n_b in self.sectors])

    def populations(self) -> np.ndarray:
        """Diagonal of the density matrix in the stored basis."""
        if self.is_pure:
            return np.concatenate([np.abs(b.ravel()) ** 2 for b in self.blocks])
        return np.real(np.diag(self.density)).copy()

    def amplitudes(self) -> dict:
        """
        Returns the pure-state amplitudes keyed by occupation tuple.

        Raises:
            DomainError: If the state is mixed
        """
        if not self.is_pure:
            raise DomainError("state", "mixed", "a mixed state has no amplitude map")
        values = np.concatenate([b.ravel() for b in self.blocks])
        return {tuple(int(n) for n in occ): complex(a) for occ, a in zip(self.occupations(), values)}

    def photon_number_distribution(self) -> dict:
        """Probability of each total photon number."""
        totals = self.occupations().sum(axis=1)
        pops = self.populations()
        return {int(n): float(pops[totals == n].sum()) for n in np.unique(totals)}


@lru_cache(maxsize=4096)
def rotation_matrix(n: int, theta: float) -> np.ndarray:
    """
    Analyzer rotation on the n-photon states of one side.

    Columns are input states |j, n-j>_{H,V}, rows are output states |j, n-j>_{T,R};
    for n = 1 this is a_H^+ -> cos(theta) a_T^+ - sin(theta) a_R^+,
    a_V^+ -> sin(theta) a_T^+ + cos(theta) a_R^+.
    """
    if n == 0:
        return np.ones((1, 1))
    j = np.arange(n)
    raising = np.sqrt((j + 1.0) * (n - j))
    generator = np.diag(raising, k=-1) - np.diag(raising, k=1)
    matrix = expm(theta * generator)
    matrix.setflags(write=False)
    return matrix


def tmsv_tail(xi: float, n_max: int) -> float:
    """Pair-number weight beyond n_max: x^(N+1) (N + 2 - (N+1) x), x = tanh^2(xi)."""
    x = math.tanh(xi) ** 2
    return x ** (n_max + 1) * (n_max + 2 - (n_max + 1) * x)


def choose_truncation(xi: float, tail: Optional[float] = None) -> int:
    """Smallest pair number whose tail weight is below the tolerance."""
    tail = config.truncation_tail if tail is None else tail
    n_max = 1
    while tmsv_tail(xi, n_max) >= tail:
        n_max += 1
    logger.debug("TMSV xi=%.6g truncated at n_max=%d", xi, n_max)
    return n_max


def tmsv_pair_weights(xi: float, n_max: int) -> np.ndarray:
    """Renormalized pair-number distribution (n+1) tanh^(2n) xi / cosh^4 xi, n <= n_max."""
    x = math.tanh(xi) ** 2
    n = np.arange(n_max + 1)
    weights = (n + 1) * x**n * (1.0 - x) ** 2
    return weights / weights.sum()


def _spdc_state(source: Spdc, tail: Optional[float]) -> FockState:
    tail = config.truncation_tail if tail is None else tail
    if source.truncation is None:
        n_max = choose_truncation(source.xi, tail)
    else:
        n_max = source.truncation
        left = tmsv_tail(source.xi, n_max)
        if left >= tail:
            raise TruncationError(
                "truncation", n_max, f"leaves TMSV tail weight {left:.3e} >= {tail:.1e} at xi={source.xi}"
            )
    weights = tmsv_pair_weights(source.xi, n_max)
    blocks = []
    for n, weight in enumerate(weights):
        block = np.zeros((n + 1, n + 1), dtype=complex)
        m = np.arange(n + 1)
        # |n-m>_{H_A} |m>_{V_A} |m>_{H_B} |n-m>_{V_B} with sign (-1)^m
        block[n - m, m] = (-1.0) ** m * math.sqrt(weight / (n + 1))
        blocks.append(block)
    return FockState(sectors=tuple((n, n) for n in range(n_max + 1)), blocks=tuple(blocks))


def _two_qubit_vector(source) -> np.ndarray:
    # basis (j_A, j_B) = (0,0) VV, (0,1) VH, (1,0) HV, (1,1) HH
    vector = np.zeros(4, dtype=complex)
    if isinstance(source, QuantumDot):
        vector[3] = 1.0 / math.sqrt(2.0)
        vector[0] = np.exp(-1j * source.fss_phase) / math.sqrt(2.0)
    elif source.which is BellState.PHI_PLUS:
        vector[3] = vector[0] = 1.0 / math.sqrt(2.0)
    else:
        vector[2] = 1.0 / math.sqrt(2.0)
        vector[1] = -1.0 / math.sqrt(2.0)
    return vector


def make_source_state(source: SourceModel, tail: Optional[float] = None) -> FockState:
    """
    Builds the input-mode state emitted by a source.

    Args:
        source (SourceModel): IdealBell, QuantumDot or Spdc
        tail (Optional[float]): TMSV tail tolerance, defaults to config.truncation_tail

    Returns:
        FockState: Pure for ideal sources, SPDC and undepolarized dots; mixed otherwise

    Raises:
        TruncationError: If an explicit SPDC truncation leaves too much weight behind
    """
    if isinstance(source, Spdc):
        return _spdc_state(source, tail)
    if not isinstance(source, (IdealBell, QuantumDot)):
        raise DomainError("source", source, "unknown source model")
    vector = _two_qubit_vector(source)
    if isinstance(source, QuantumDot) and source.p < 1.0:
        # p |psi><psi| + (1 - p) I/4 on the one-photon-per-side subspace
        density = source.p * np.outer(vector, vector.conj()) + (1.0 - source.p) * maximally_mixed_pair().density
        return FockState(sectors=((1, 1),), density=density)
    return FockState(sectors=((1, 1),), blocks=(vector.reshape(2, 2),))


def maximally_mixed_pair() -> FockState:
    """One photon per side in the maximally mixed polarization state."""
    return FockState(sectors=((1, 1),), density=np.eye(4, dtype=complex) / 4.0)


def apply_analyzers(state: FockState, settings: AnalyzerSettings) -> FockState:
    """
    Re-expresses an input-mode state in the analyzers' output modes.

    Photon number on each side is conserved; each sector transforms with the
    rotation matrices of its photon numbers.
    """
    if state.output_modes:
        raise DomainError("state", "output modes", "analyzers have already been applied")
    if state.is_pure:
        blocks = tuple(
            rotation_matrix(n_a, settings.theta_a) @ block @ rotation_matrix(n_b, settings.theta_b).T
            for (n_a, n_b), block in zip(state.sectors, state.blocks)
        )
        return FockState(sectors=state.sectors, blocks=blocks, output_modes=True)
    unitary = block_diag(
        *(
            np.kron(rotation_matrix(n_a, settings.theta_a), rotation_matrix(n_b, settings.theta_b))
            for n_a, n_b in state.sectors
        )
    )
    density = unitary @ state.density @ unitary.T
    return FockState(sectors=state.sectors, density=density, output_modes=True)


def _no_click_weights(state: FockState, detector: DetectorModel) -> np.ndarray:
    occupations = state.occupations()
    populations = state.populations()
    # photons impinging on each subset: (dimension, 16)
    exponents = occupations @ MASK_BITS.T
    survival = np.power(1.0 - detector.eta, exponents)
    return (populations @ survival) * dark_count_factors(detector.nu)


def no_click_weight(state: FockState, modes: Iterable[str], detector: DetectorModel) -> float:
    """
    Probability that none of the given output detectors clicks.

    Uses <n| :exp(-eta n):|n> = (1 - eta)^n, so only populations are needed.

    Args:
        state (FockState): State in output modes
        modes (Iterable[str]): Subset of OUTPUT_MODES
        detector (DetectorModel): Efficiency and dark counts

    Returns:
        float: e^{-|M| nu} sum_n rho_nn (1 - eta)^{sum_{i in M} n_i}
    """
    if not state.output_modes:
        raise DomainError("state", "input modes", "apply the analyzers first")
    modes = set(modes)
    unknown = modes - set(OUTPUT_MODES)
    if unknown:
        raise DomainError("modes", sorted(unknown), f"expected a subset of {OUTPUT_MODES}")
    mask = np.array([1 if label in modes else 0 for label in OUTPUT_MODES])
    exponents = state.occupations() @ mask
    weight = state.populations() @ np.power(1.0 - detector.eta, exponents)
    return float(weight * math.exp(-detector.nu * len(modes)))


def outcome_distribution(state: FockState, settings: AnalyzerSettings, detector: DetectorModel) -> OutcomeDistribution:
    """
    All 16 click-pattern probabilities of an input-mode state behind the analyzers.

    Raises:
        NumericalError: If inclusion-exclusion yields a probability below -1e-10
    """
    rotated = apply_analyzers(state, settings)
    return to_distribution(click_probabilities(_no_click_weights(rotated, detector)))
