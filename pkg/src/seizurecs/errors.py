"""Exception types shared across the package.

The CLI maps these onto process exit codes, so every error a user can
trigger should be one of them.
"""


class SeizureCSError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(SeizureCSError, ValueError):
    """Invalid configuration value or flag."""

    exit_code = 2


class ContractError(SeizureCSError, ValueError):
    """A precondition of an operation was violated by its caller."""

    exit_code = 2


class DimensionError(ContractError):
    """Tensor shapes are incompatible for the requested operation."""


class StateError(SeizureCSError, RuntimeError):
    """An object is not in the state the operation requires."""

    exit_code = 2


class FormatError(SeizureCSError, ValueError):
    """A binary or text file does not follow its declared layout.

    ``offset`` is the byte offset at which parsing failed, when known.
    """

    exit_code = 3

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFileError(FormatError):
    """File is well-formed but uses a feature this reader does not handle."""


class NumericalError(SeizureCSError, FloatingPointError):
    """Non-finite values appeared during optimization."""

    exit_code = 4
