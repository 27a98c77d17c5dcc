"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes (see ``pairopt.cli``).
"""


class PairoptError(Exception):
    """Base class for all package errors."""


class ConfigError(PairoptError, ValueError):
    """Shape mismatch, invalid hyperparameter or malformed config file."""


class ContractError(PairoptError, ValueError):
    """An operation was called with inputs violating its precondition."""


class InfeasibleError(ContractError):
    """No perfect matching exists (odd team count without byes)."""


class EnumerationCapError(ContractError):
    """Refusal to enumerate a combinatorially huge option space."""


class NumericError(PairoptError, FloatingPointError):
    """Non-finite values where finite ones are required."""


class StaleCacheError(PairoptError, RuntimeError):
    """A backward pass was fed a cache from an older parameter version."""


class CheckpointError(PairoptError, OSError):
    """Missing or corrupt checkpoint file."""


class DivergenceError(NumericError):
    """Training parameters blew past the divergence guard."""
