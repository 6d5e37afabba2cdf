"""Exception hierarchy.  Each class maps to a CLI exit code."""


class VedsaError(Exception):
    exit_code = 1


class ConfigurationError(VedsaError, ValueError):
    exit_code = 3


class DomainError(VedsaError, ValueError):
    exit_code = 3


class StructuralError(VedsaError, ValueError):
    """Shape or architecture mismatch."""

    exit_code = 3


class UsageError(VedsaError, RuntimeError):
    exit_code = 3


class SingularityError(DomainError):
    pass


class ParseError(VedsaError, ValueError):
    exit_code = 4

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line
        self.path = path


class SchemaError(VedsaError, ValueError):
    exit_code = 4


class NumericHealthError(VedsaError, FloatingPointError):
    exit_code = 5
