"""Shared exception types."""


class ConfigError(ValueError):
    """A configuration document or parameter set is invalid."""


class UnsupportedOperation(RuntimeError):
    """The operation needs data the object does not carry (payoffs, oracle, ...)."""


class IndeterminateResult(RuntimeError):
    """Not enough usable data to produce a result (e.g. all sampled pairs degenerate)."""
