"""Error taxonomy shared across the package.

The command line maps these onto exit codes: configuration problems exit
with 1, numerical failures with 2, resource-limit refusals with 3.
"""


class SymbreakError(Exception):
    """Base class for all package errors."""


class InvalidSpecError(SymbreakError, ValueError):
    """A model spec, config value, or operation input is out of contract."""


class InvalidStateError(SymbreakError, ValueError):
    """A state or density matrix violates its invariants (e.g. negative
    eigenvalue below tolerance)."""


class UndefinedCorrelationError(SymbreakError, ValueError):
    """Bath correlation requested for a state annihilated by the operator."""


class NumericalFailureError(SymbreakError, RuntimeError):
    """An eigensolver or downstream numerical routine failed to converge
    or produced out-of-tolerance results."""


class ResourceLimitError(SymbreakError, RuntimeError):
    """A requested matrix dimension exceeds the configured cap."""
