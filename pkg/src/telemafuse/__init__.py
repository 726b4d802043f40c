"""Driver gender classification from trip telemetry with fuzzy-integral fusion."""

from .errors import (ConfigError, DataError, DomainError, NumericError, ParseError,
                     SchemaError, TelemafuseError, TrainingError, ValidationError)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "DomainError", "NumericError", "ParseError",
    "SchemaError", "TelemafuseError", "TrainingError", "ValidationError", "__version__",
]
