"""Exception types shared across the package."""


class VlapsError(Exception):
    """Base class for all package errors."""


class ConfigurationError(VlapsError):
    """Invalid user-supplied configuration (bad sizes, missing files, ...)."""


class ContractViolationError(VlapsError):
    """A caller broke an API precondition (shape mismatch, re-expansion, ...)."""


class DegenerateLibraryError(ConfigurationError):
    """Library construction received inputs that cannot yield distinct prototypes."""


class PriorQueryError(VlapsError):
    """The prior policy failed to produce a macro-action."""
