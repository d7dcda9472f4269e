"""Exception types raised across the package."""


class KickLocError(Exception):
    """Base class for all package errors."""


class DomainError(KickLocError, ValueError):
    """An argument lies outside the domain of an operation."""


class RepresentationError(KickLocError, ValueError):
    """A state was passed in the wrong (momentum/phase) representation."""


class DegenerateBranchError(KickLocError, ArithmeticError):
    """A measurement branch has (numerically) zero weight."""


class CapacityError(KickLocError, ValueError):
    """A request exceeds what a backend can handle (e.g. density matrix size)."""


class FitError(KickLocError, ValueError):
    """Not enough usable data for a power-law fit."""


class CheckpointError(KickLocError, RuntimeError):
    """A checkpoint could not be written, read, or does not match the run."""
