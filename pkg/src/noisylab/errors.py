"""Exception hierarchy shared by all noisylab modules."""


class NoisylabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(NoisylabError, ValueError):
    """An argument violates a documented precondition or invariant."""


class OracleFailureError(NoisylabError, RuntimeError):
    """The finite-difference oracle hit a non-finite function value."""


class FormatError(NoisylabError, ValueError):
    """A binary or text file does not match its documented layout."""


class ConfigError(NoisylabError, ValueError):
    """An experiment config file is missing, malformed, or has unknown keys."""


class DivergenceError(NoisylabError, RuntimeError):
    """Training produced a non-finite loss, gradient, or parameter."""
