"""Domain types shared by the engines, the metrics and the front ends."""

from dataclasses import dataclass, field
from enum import Enum
import math
from typing import Iterable, Optional, Union

import numpy as np

from config.settings import config
from services.errors import ConsistencyError, DomainError

# Output ports in pattern-bit order (most significant first).
OUTPUT_MODES = ("T_A", "R_A", "T_B", "R_B")
# Input modes of the four-mode Fock space.
INPUT_MODES = ("H_A", "V_A", "H_B", "V_B")

TSIRELSON = 2.0 * math.sqrt(2.0)


def pattern_index(clicks: Iterable[str]) -> int:
    """
    Maps a set of clicking detectors to its index in an OutcomeDistribution.

    Args:
        clicks (Iterable[str]): Labels from OUTPUT_MODES that registered a click

    Returns:
        int: Index in [0, 16)
    """
    index = 0
    for label in clicks:
        if label not in OUTPUT_MODES:
            raise DomainError("clicks", label, f"unknown detector, expected one of {OUTPUT_MODES}")
        index |= 1 << (3 - OUTPUT_MODES.index(label))
    return index


def pattern_clicks(index: int) -> tuple:
    """Inverse of pattern_index: the detectors that clicked in pattern `index`."""
    return tuple(label for bit, label in enumerate(OUTPUT_MODES) if index & (1 << (3 - bit)))


def _check_finite(name: str, value: float):
    if not math.isfinite(value):
        raise DomainError(name, value, "must be a finite real number")


@dataclass(frozen=True)
class DetectorModel:
    """Identical on/off detectors with efficiency `eta` and dark-count exponent `nu`."""

    eta: float = 1.0
    nu: float = 0.0

    def __post_init__(self):
        _check_finite("eta", self.eta)
        _check_finite("nu", self.nu)
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError("eta", self.eta, "detection efficiency must lie in [0, 1]")
        if self.nu < 0.0:
            raise DomainError("nu", self.nu, "dark-count parameter must be non-negative")


@dataclass(frozen=True)
class AnalyzerSettings:
    """Half-wave-plate angles (radians) of the two polarization analyzers."""

    theta_a: float
    theta_b: float

    def __post_init__(self):
        _check_finite("theta_a", self.theta_a)
        _check_finite("theta_b", self.theta_b)


class BellState(str, Enum):
    PHI_PLUS = "phi+"
    PSI_MINUS = "psi-"


@dataclass(frozen=True)
class IdealBell:
    which: BellState = BellState.PHI_PLUS

    def __post_init__(self):
        object.__setattr__(self, "which", BellState(self.which))

    @property
    def common_rotation_invariant(self) -> bool:
        return True


@dataclass(frozen=True)
class QuantumDot:
    """
    Quantum-dot pair with fine-structure phase and white-noise depolarization.

    Attributes:
        fss_phase (float): The dimensionless phase imprinted on the |VV> term
        p (float): Probability that the pair survives depolarization
    """

    fss_phase: float = 0.0
    p: float = 1.0

    def __post_init__(self):
        _check_finite("fss", self.fss_phase)
        _check_finite("p", self.p)
        if not 0.0 <= self.p <= 1.0:
            raise DomainError("p", self.p, "survival probability must lie in [0, 1]")

    @property
    def common_rotation_invariant(self) -> bool:
        return math.cos(self.fss_phase) == 1.0


@dataclass(frozen=True)
class Spdc:
    """
    Two-mode squeezed vacuum from an SPDC source.

    Attributes:
        xi (float): Squeezing parameter, > 0
        truncation (Optional[int]): Maximal pair number kept by the Fock engine;
            None picks the smallest one meeting the tail tolerance
    """

    xi: float
    truncation: Optional[int] = None

    def __post_init__(self):
        _check_finite("xi", self.xi)
        if self.xi <= 0.0:
            raise DomainError("xi", self.xi, "squeezing parameter must be positive")
        if self.truncation is not None and self.truncation < 1:
            raise DomainError("truncation", self.truncation, "n_max must be at least 1")

    @property
    def common_rotation_invariant(self) -> bool:
        return True


SourceModel = Union[IdealBell, QuantumDot, Spdc]

SOURCE_KINDS = ("bell", "qd", "spdc")


def make_source(
    kind: str,
    xi: Optional[float] = None,
    fss: float = 0.0,
    p: float = 1.0,
    bell: str = BellState.PHI_PLUS.value,
    truncation: Optional[int] = None,
) -> SourceModel:
    """
    Builds a source from flat parameters, as given on the command line or in a query string.

    Raises:
        DomainError: If the kind is unknown or an SPDC source has no xi
    """
    if kind == "bell":
        if bell not in {b.value for b in BellState}:
            raise DomainError("bell", bell, f"expected one of {[b.value for b in BellState]}")
        return IdealBell(BellState(bell))
    if kind == "qd":
        return QuantumDot(fss_phase=fss, p=p)
    if kind == "spdc":
        if xi is None:
            raise DomainError("xi", xi, "an SPDC source needs a squeezing parameter")
        return Spdc(xi=xi, truncation=truncation)
    raise DomainError("source", kind, f"expected one of {SOURCE_KINDS}")


def describe_source(source: SourceModel) -> dict:
    """Flat parameters of a source, the inverse of make_source."""
    if isinstance(source, IdealBell):
        return {"source": "bell", "bell": source.which.value}
    if isinstance(source, QuantumDot):
        return {"source": "qd", "fss": source.fss_phase, "p": source.p}
    return {"source": "spdc", "xi": source.xi}


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """Probabilities of the 16 click patterns over (T_A, R_A, T_B, R_B)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (16,):
            raise DomainError("probs", probs.shape, "expected 16 pattern probabilities")
        tol = config.probability_tolerance
        if np.any(probs < -tol) or np.any(probs > 1.0 + tol):
            raise ConsistencyError(f"pattern probabilities outside [0, 1]: {probs}")
        if abs(probs.sum() - 1.0) > tol:
            raise ConsistencyError(f"pattern probabilities sum to {probs.sum():.15g}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def prob(self, *clicks: str) -> float:
        """Probability that exactly the named detectors click."""
        return float(self.probs[pattern_index(clicks)])

    def coincidences(self) -> dict:
        """Raw exactly-one-click-per-side probabilities keyed tt, tr, rt, rr."""
        return {
            "tt": self.prob("T_A", "T_B"),
            "tr": self.prob("T_A", "R_B"),
            "rt": self.prob("R_A", "T_B"),
            "rr": self.prob("R_A", "R_B"),
        }


@dataclass(frozen=True)
class LogicalDistribution:
    p_tt: float
    p_tr: float
    p_rt: float
    p_rr: float

    def __post_init__(self):
        tol = config.probability_tolerance
        values = self.as_tuple()
        if any(v < -tol for v in values):
            raise ConsistencyError(f"negative logical probability: {values}")
        if abs(sum(values) - 1.0) > tol:
            raise ConsistencyError(f"logical probabilities sum to {sum(values):.15g}")

    def as_tuple(self) -> tuple:
        return self.p_tt, self.p_tr, self.p_rt, self.p_rr

    @property
    def p_same(self) -> float:
        return self.p_tt + self.p_rr

    @property
    def p_diff(self) -> float:
        return self.p_tr + self.p_rt


class BinningStrategy(str, Enum):
    STANDARD = "standard"
    TRANSMITTED_ONLY = "vivoli"


def _parse_angle_list(text: str) -> list:
    try:
        return [float(part) for part in text.split(",")]
    except ValueError:
        raise DomainError("angles", text, "expected comma-separated numbers") from None


@dataclass(frozen=True)
class MeasurementPlan:
    """CHSH settings plus Alice's key-generation setting; defaults are the ideal-Bell optima."""

    theta_a1: float = math.pi / 8
    theta_a2: float = 3 * math.pi / 8
    theta_b1: float = 0.0
    theta_b2: float = math.pi / 4
    theta_a0: float = 0.0

    def __post_init__(self):
        for name in ("theta_a1", "theta_a2", "theta_b1", "theta_b2", "theta_a0"):
            _check_finite(name, getattr(self, name))

    @classmethod
    def from_angles(cls, angles) -> "MeasurementPlan":
        """Builds a plan from (a1, a2, b1, b2) or (a1, a2, b1, b2, a0), as a sequence or a comma list."""
        if isinstance(angles, str):
            angles = _parse_angle_list(angles)
        angles = [float(a) for a in angles]
        if len(angles) not in (4, 5):
            raise DomainError("angles", angles, "expected a1,a2,b1,b2[,a0]")
        return cls(*angles)

    def chsh_settings(self) -> tuple:
        """Settings for E11, E12, E21, E22 in that order."""
        return (
            AnalyzerSettings(self.theta_a1, self.theta_b1),
            AnalyzerSettings(self.theta_a1, self.theta_b2),
            AnalyzerSettings(self.theta_a2, self.theta_b1),
            AnalyzerSettings(self.theta_a2, self.theta_b2),
        )

    def key_settings(self) -> AnalyzerSettings:
        return AnalyzerSettings(self.theta_a0, self.theta_b1)

    def angles(self) -> tuple:
        return self.theta_a1, self.theta_a2, self.theta_b1, self.theta_b2, self.theta_a0


@dataclass(frozen=True)
class KeyRateInput:
    qber: float
    bell_s: float = TSIRELSON

    def __post_init__(self):
        _check_finite("qber", self.qber)
        _check_finite("bell_s", self.bell_s)
        if not 0.0 <= self.qber <= 0.5:
            raise DomainError("qber", self.qber, "QBER must lie in [0, 1/2]")
        if not 0.0 <= self.bell_s <= TSIRELSON + 1e-12:
            raise DomainError("bell_s", self.bell_s, "Bell parameter must lie in [0, 2*sqrt(2)]")


@dataclass(frozen=True)
class KeyRateResult:
    """Devetak-Winter rate in bits per channel use; may be negative."""

    rate: float
    secure: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "secure", self.rate > 0.0)


@dataclass(frozen=True)
class MetricsReport:
    bell_s: float
    qber_di: float
    qber_bb84: float
    correlations: tuple
    chsh_placement: int
    key_flip: bool
    rate_di: KeyRateResult
    rate_bb84: KeyRateResult

    def to_dict(self) -> dict:
        return {
            "bell_s": self.bell_s,
            "qber_di": self.qber_di,
            "qber_bb84": self.qber_bb84,
            "correlations": list(self.correlations),
            "chsh_placement": self.chsh_placement,
            "key_flip": self.key_flip,
            "rate_di": self.rate_di.rate,
            "secure_di": self.rate_di.secure,
            "rate_bb84": self.rate_bb84.rate,
            "secure_bb84": self.rate_bb84.secure,
        }
