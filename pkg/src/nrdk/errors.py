"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, file and
format problems exit 3, numeric failures (degenerate fits, diverged training,
undefined metrics) exit 4.
"""


class NrdkError(Exception):
    """Base class for all package errors."""


class ConfigError(NrdkError, ValueError):
    """Invalid configuration value; the message names the offending key."""


class SizeError(NrdkError, ValueError):
    """Array shape or size violates an operation's contract."""


class DataFormatError(NrdkError, IOError):
    """A serialized file is truncated, corrupt, or of an unknown version."""


class FitError(NrdkError, ValueError):
    """A least-squares fit is rank deficient or outside the admissible group."""


class DegenerateInputError(NrdkError, ValueError):
    """Every pixel of every frame was masked out; the loss is undefined."""


class MetricError(NrdkError, ValueError):
    """A metric is undefined for this input (e.g. zero-variance frame)."""


class DivergenceError(NrdkError, ArithmeticError):
    """A non-finite value appeared during optimization."""
