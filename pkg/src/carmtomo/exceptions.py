"""Exception hierarchy. Every error is a ``ValueError`` subclass except the
I/O and config ones, so callers can catch broadly or precisely."""


class CarmTomoError(Exception):
    """Base class for all package errors."""


class DegenerateRay(CarmTomoError, ValueError):
    pass


class InvalidSpan(CarmTomoError, ValueError):
    pass


class EmptyStack(CarmTomoError, ValueError):
    pass


class DomainMismatch(CarmTomoError, ValueError):
    pass


class NonPositiveInitial(CarmTomoError, ValueError):
    pass


class NoPeak(CarmTomoError, ValueError):
    pass


class ZeroSignal(CarmTomoError, ValueError):
    pass


class DegenerateContrast(CarmTomoError, ValueError):
    pass


class OutOfBounds(CarmTomoError, IndexError):
    pass


class FileFormatError(CarmTomoError, ValueError):
    """Base for sidecar/payload problems."""


class SizeMismatch(FileFormatError):
    pass


class MissingField(FileFormatError):
    pass


class UnsupportedVersion(FileFormatError):
    pass


class ConfigError(CarmTomoError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class StageError(CarmTomoError, RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
