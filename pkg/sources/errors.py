"""
Exception hierarchy. The CLI maps these classes to exit codes:
PreconditionError -> 3, InvariantError -> 4.
"""

class PolarError(Exception):
    """Base class for every error raised by the library."""

class PreconditionError(PolarError, ValueError):
    """An argument is outside the documented range of an operation."""

class FieldMismatchError(PreconditionError):
    """Operands belong to different finite fields."""

class CapExceededError(PreconditionError):
    """A configured memory or enumeration cap would be exceeded."""

class InvariantError(PolarError):
    """A checked mathematical invariant does not hold."""
