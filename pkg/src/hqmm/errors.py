"""Exception hierarchy shared by every module in the package."""


class HqmmError(Exception):
    """Base class for all package errors."""


class DimensionError(HqmmError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class ValidityError(HqmmError, ValueError):
    """A model or matrix violates one of its structural invariants."""


class ZeroProbabilityError(HqmmError, ArithmeticError):
    """A filtering normalizer fell below the underflow floor.

    Attributes
    ----------
    position : int or None
        Index of the offending symbol within its sequence.
    symbol : int or None
        The symbol that was observed.
    sequence_index : int or None
        Index of the sequence within a batch, when known.
    """

    def __init__(self, message, position=None, symbol=None, sequence_index=None):
        super().__init__(message)
        self.position = position
        self.symbol = symbol
        self.sequence_index = sequence_index


class NegativeProbabilityError(ValidityError):
    """An OOM evaluated a sequence probability below zero."""


class ResourceError(HqmmError, RuntimeError):
    """A bounded enumeration would exceed its size guard."""


class StepError(HqmmError, ArithmeticError):
    """The retraction linear system is too ill-conditioned to solve."""


class TransformError(HqmmError, ValueError):
    """A similarity transform does not exist for the given model."""


class ConfigurationError(HqmmError, ValueError):
    """Invalid training or tuning configuration."""


class InputError(HqmmError, ValueError):
    """Invalid user data (symbols out of range, bad split parameters...)."""


class ParseError(HqmmError, ValueError):
    """A data file could not be parsed.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending record.
    """

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnclassifiableError(HqmmError, ArithmeticError):
    """Every candidate model assigned zero probability to a sequence."""
