"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class EmptyEntry(EngineError):
    """A text entry or token matrix has no usable tokens."""


class ParseError(EngineError):
    """A corpus line is not valid JSON."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SchemaError(EngineError):
    """A corpus record violates the documented schema."""


class FormatError(EngineError):
    """A binary artifact does not match the expected layout."""


class ShapeError(EngineError):
    """Operand dimensions are inconsistent."""


class DegenerateRow(EngineError):
    """A projected token row collapsed to zero and cannot be normalized."""


class EmptyCorpus(EngineError):
    """An operation requires at least one dialogue round."""


class ConfigError(EngineError):
    """A configuration value is out of its allowed range."""


class LabelError(EngineError):
    """A gold label index is outside the candidate range."""


class EmptyEval(EngineError):
    """An evaluation was requested over zero predictions."""


class NumericsError(EngineError):
    """A non-finite value appeared in a numeric computation."""
