"""Exception hierarchy shared by the toolkit.

The CLI maps these onto exit codes, so library code raises the most specific
class that applies.
"""


class DcndpError(Exception):
    """Base class for every error raised by this package."""


class ParseError(DcndpError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class JoinError(DcndpError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class RejectedInputError(DcndpError, ValueError):
    pass


class DomainError(DcndpError, ValueError):
    pass


class ConfigError(DcndpError, ValueError):
    pass


class SchemaError(ConfigError):
    pass


class SizeGuardError(DcndpError, RuntimeError):
    """Raised when exhaustive enumeration would be too large."""


class SolverError(DcndpError, RuntimeError):
    def __init__(self, message, diagnostics=""):
        self.diagnostics = diagnostics
        super().__init__(message)


class SolutionFormatError(DcndpError, ValueError):
    pass


class ConsistencyError(DcndpError, ValueError):
    pass


class StageError(DcndpError, RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
