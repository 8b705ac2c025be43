"""Exception hierarchy.

Every error raised on purpose by the package derives from ``IsecacheError``.
The three middle classes map onto the CLI exit codes (2, 3 and 4).
"""


class IsecacheError(Exception):
    exit_code = 1


class ConfigError(IsecacheError):
    """Bad run configuration or generator spec."""

    exit_code = 2


class SpecError(ConfigError):
    pass


class DataError(IsecacheError):
    """Input data that cannot be parsed or fails validation."""

    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ValidationError(DataError):
    pass


class IntegrityError(DataError):
    pass


class ParameterError(DataError):
    pass


class FixtureError(DataError):
    pass


class PipelineError(IsecacheError):
    exit_code = 4


class SubstitutionError(PipelineError):
    pass


class ReportError(PipelineError):
    pass
