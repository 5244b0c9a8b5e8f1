class SemantlyError(Exception):
    """Base class for every error raised by the mapping pipeline."""


class ConfigError(SemantlyError, ValueError):
    pass


class NoValidDepth(SemantlyError):
    """Every depth sample under the detection was zero or non-finite."""


class NonMonotonicStamp(SemantlyError):

    def __init__(self, stamp: float, previous: float):
        self.stamp = stamp
        self.previous = previous
        super().__init__(f"frame stamp {stamp} precedes previous frame stamp {previous}")


class LogError(SemantlyError):
    pass


class MalformedRecord(LogError):

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class NonMonotonicStream(LogError):

    def __init__(self, stream: str, stamp: float, line_number: int = 0):
        self.stream = stream
        self.stamp = stamp
        self.line_number = line_number
        super().__init__(f"stream '{stream}' is not strictly increasing at t={stamp} (line {line_number})")


class PoseGapTooLarge(SemantlyError):

    def __init__(self, stamp: float, reason: str):
        self.stamp = stamp
        self.reason = reason
        super().__init__(f"no usable pose at t={stamp}: {reason}")


class ExportError(SemantlyError):

    def __init__(self, path, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class QueryError(SemantlyError):
    pass
