"""Exception hierarchy for unileak."""


class UnileakError(Exception):
    """Base class for all errors raised by this package."""


class StructureError(UnileakError):
    """Malformed numeric input: wrong shape, non-finite entries, bad grid."""


class ContractError(UnileakError):
    """A numeric precondition was violated (e.g. operator not Hermitian)."""


class ConfigError(UnileakError):
    """Invalid model/run configuration; the message names the offending field."""


class NumericsError(UnileakError):
    """Runtime numerical failure, e.g. diverging unitarity residual."""
