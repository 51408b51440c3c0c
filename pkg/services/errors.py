class EngineError(Exception):
    """Base class for all errors raised by the engines."""


class DomainError(EngineError, ValueError):
    """
    A parameter lies outside the domain of an operation.

    Attributes:
        parameter (str): Name of the offending parameter
        value: The rejected value
    """

    def __init__(self, parameter: str, value, message: str):
        self.parameter = parameter
        self.value = value
        super().__init__(f"{parameter}={value!r}: {message}")


class TruncationError(DomainError):
    """A requested Fock truncation leaves too much TMSV weight behind."""


class DegenerateInputError(DomainError):
    """A ratio of probabilities has a vanishing denominator."""


class NumericalError(EngineError, ArithmeticError):
    """A numerical symptom that only a backend bug can produce."""


class ConsistencyError(NumericalError):
    """A distribution that must sum to one does not."""
