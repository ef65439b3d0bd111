class KeedError(Exception):
    """Base class for all errors raised by python-keed."""


class DataError(KeedError, ValueError):
    """Input data is malformed, truncated or inconsistent."""


class ConfigError(KeedError, ValueError):
    """A configuration value violates its section's invariants."""


class ShapeError(KeedError, ValueError):
    """Tensor or parameter shapes do not match."""


class DivergenceError(KeedError, FloatingPointError):
    """The network produced non-finite activations."""


class FetchError(KeedError):
    """A dataset download failed or did not verify."""


class UsageError(KeedError):
    """The command line is invalid."""
