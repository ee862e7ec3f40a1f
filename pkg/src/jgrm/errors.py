"""Exception types raised across the package."""


class JGRMError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(JGRMError, ValueError):
    pass


class InvalidInputError(JGRMError, ValueError):
    """Non-finite or out-of-domain numeric input to an encoder."""


class NotFoundError(JGRMError, KeyError):
    pass


class UnknownSegmentError(JGRMError, KeyError):
    pass


class GenerationFailureError(JGRMError, RuntimeError):
    pass


class CorruptAssignmentError(JGRMError, ValueError):
    pass


class ParseError(JGRMError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DetourFailureError(JGRMError, RuntimeError):
    pass


class DegenerateLabelsError(JGRMError, ValueError):
    pass


class CheckpointError(JGRMError):
    pass


class CorruptFileError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class ConfigMismatchError(CheckpointError):
    pass


class NonFiniteLossError(JGRMError, FloatingPointError):
    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path
