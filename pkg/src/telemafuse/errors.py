"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class TelemafuseError(Exception):
    exit_code = 4
    code = "INTERNAL"


class ConfigError(TelemafuseError, ValueError):
    exit_code = 2
    code = "CONFIG"


class DataError(TelemafuseError, ValueError):
    exit_code = 3
    code = "DATA"


class ParseError(DataError):
    code = "PARSE"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DataError):
    code = "VALIDATION"


class EmptyInputError(DataError):
    code = "EMPTY"


class SchemaError(DataError, KeyError):
    code = "SCHEMA"

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class TrainingError(DataError):
    code = "TRAINING"


class NumericError(TelemafuseError, ArithmeticError):
    exit_code = 4
    code = "NUMERIC"


class DomainError(NumericError, ValueError):
    code = "DOMAIN"


class OutputError(DataError):
    code = "IO"
