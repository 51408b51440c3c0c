from functools import cached_property
import logging

logger = logging.getLogger(__name__)

_DEFAULTS = {
    "truncation_tail": 1e-12,
    "probability_tolerance": 1e-10,
    "negative_probability_tolerance": 1e-10,
    "grid_points": 5,
    "refine_starts": 5,
    "random_starts": 3,
    "optimizer_budget": 40000,
    "simplex_tolerance": 1e-6,
    "xi_bounds": (1e-3, 1.5),
    "sweep_workers": 4,
    "csv_significant_digits": 12,
    "xi_range": (0.01, 1.2, 120),
    "eta_range": (0.8, 1.0, 41),
    "fss_phase": 0.25,
    "figure_nu": 1e-3,
    "figure_survival": (0.9, 1.0),
}


def get_default(name: str):
    """
    Returns the built-in default for a configuration key.

    Args:
        name (str): The configuration key

    Returns:
        The default value

    Raises:
        KeyError: If the key is unknown
    """
    try:
        return _DEFAULTS[name]
    except KeyError:
        logger.error("Unknown config key: %s", name)
        raise


class EngineConfig:
    """
    Read-only numerical defaults for the engines, the optimizer and the CLI.

    Values come from the built-in table; keyword overrides build a modified
    instance (used by tests and by CLI flags). Nothing is read from the
    environment or from files.
    """

    def __init__(self, **overrides):
        unknown = set(overrides) - set(_DEFAULTS)
        if unknown:
            raise KeyError(f"Unknown config keys: {sorted(unknown)}")
        self._overrides = dict(overrides)

    def _value(self, name: str):
        if name in self._overrides:
            return self._overrides[name]
        return get_default(name)

    def replace(self, **overrides) -> "EngineConfig":
        """Returns a copy with some values overridden; None values are ignored."""
        merged = {**self._overrides, **{k: v for k, v in overrides.items() if v is not None}}
        return EngineConfig(**merged)

    @cached_property
    def truncation_tail(self) -> float:
        """
        Property that returns the maximal TMSV weight allowed beyond the Fock truncation.

        Returns:
            float: Tail weight tolerance
        """
        return float(self._value("truncation_tail"))

    @cached_property
    def probability_tolerance(self) -> float:
        """Allowed deviation of a distribution's total from 1."""
        return float(self._value("probability_tolerance"))

    @cached_property
    def negative_probability_tolerance(self) -> float:
        """Largest negative round-off clipped to zero before it counts as a backend bug."""
        return float(self._value("negative_probability_tolerance"))

    @cached_property
    def grid_points(self) -> int:
        return int(self._value("grid_points"))

    @cached_property
    def refine_starts(self) -> int:
        return int(self._value("refine_starts"))

    @cached_property
    def random_starts(self) -> int:
        return int(self._value("random_starts"))

    @cached_property
    def optimizer_budget(self) -> int:
        return int(self._value("optimizer_budget"))

    @cached_property
    def simplex_tolerance(self) -> float:
        return float(self._value("simplex_tolerance"))

    @cached_property
    def xi_bounds(self) -> tuple:
        lo, hi = self._value("xi_bounds")
        return float(lo), float(hi)

    @cached_property
    def sweep_workers(self) -> int:
        return int(self._value("sweep_workers"))

    @cached_property
    def csv_significant_digits(self) -> int:
        return int(self._value("csv_significant_digits"))

    @cached_property
    def xi_range(self) -> tuple:
        """
        Property that returns the default squeezing axis of the SPDC figure.

        Returns:
            tuple: (from, to, steps)
        """
        lo, hi, steps = self._value("xi_range")
        return float(lo), float(hi), int(steps)

    @cached_property
    def eta_range(self) -> tuple:
        """
        Property that returns the default efficiency axis of the quantum-dot figures.

        Returns:
            tuple: (from, to, steps)
        """
        lo, hi, steps = self._value("eta_range")
        return float(lo), float(hi), int(steps)

    @cached_property
    def fss_phase(self) -> float:
        return float(self._value("fss_phase"))

    @cached_property
    def figure_nu(self) -> float:
        return float(self._value("figure_nu"))

    @cached_property
    def figure_survival(self) -> tuple:
        return tuple(float(p) for p in self._value("figure_survival"))


config = EngineConfig()
