"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ValidationError -> 2,
PhysicsError -> 3, DataFormatError / OSError -> 4.
"""


class HeitlerLabError(Exception):
    """Base class for all package errors."""


class ValidationError(HeitlerLabError):
    """A scenario file or configuration object violates its schema."""


class PhysicsError(HeitlerLabError):
    """A physics precondition is violated (Nyquist, step size, drive
    strength outside a model's validity range, ...)."""


class DataFormatError(HeitlerLabError):
    """A data file is corrupt or inconsistent; message carries the byte
    offset or row number where parsing failed."""
