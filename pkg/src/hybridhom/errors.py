"""Exception hierarchy shared by all modules."""


class HybridHomError(Exception):
    """Base class for package errors."""


class ParameterError(HybridHomError, ValueError):
    """A parameter lies outside its physical or numerical domain."""


class ContractError(HybridHomError, ValueError):
    """An input violates a structural precondition (e.g. unsorted tags)."""


class RangeError(HybridHomError, OverflowError):
    """A time value would leave the representable 64-bit range."""


class UndefinedRatioError(HybridHomError, ZeroDivisionError):
    """A ratio was requested with an empty or zero-rate denominator."""


class FitError(HybridHomError, RuntimeError):
    """Generic fitting failure."""


class RankDeficiencyError(FitError):
    """The Jacobian of a fit is singular at the solution."""


class ConfigError(HybridHomError, ValueError):
    """Configuration file does not match the schema."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TagFileError(HybridHomError, ValueError):
    """A binary tag file is malformed."""


class MissingChannelError(TagFileError):
    """A requested channel is not present in the inputs."""


class UnsortedFileError(TagFileError):
    """Tag times in a file are not monotone."""


class SchemaMismatchError(TagFileError):
    """Header fields disagree with the records or with the request."""
