"""Exception types raised across the package."""


class QuiescentFrontError(Exception):
    """Base class for domain failures (mapped to CLI exit code 1)."""


class ConfigError(QuiescentFrontError):
    """Malformed or out-of-range configuration (CLI exit code 2)."""


class MassDeficit(QuiescentFrontError):
    pass


class SymmetryViolation(QuiescentFrontError):
    pass


class NoPositiveEquilibrium(QuiescentFrontError):
    pass


class NoRoot(QuiescentFrontError):
    pass


class NoConvergence(QuiescentFrontError):
    def __init__(self, message, last_iterate=None, change=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.change = change


class MonotonicityLoss(QuiescentFrontError):
    pass


class NotAttained(QuiescentFrontError):
    pass


class GapViolated(QuiescentFrontError):
    pass


class NonPositiveConstant(QuiescentFrontError):
    def __init__(self, name, value):
        super().__init__(f"constant {name} = {value:.6g} is not positive")
        self.name = name
        self.value = value


class HistoryUnderflow(QuiescentFrontError):
    pass


class StabilityBound(QuiescentFrontError):
    pass


class NonFinite(QuiescentFrontError):
    pass


class WindowTooSparse(QuiescentFrontError):
    pass


class NoiseFloor(QuiescentFrontError):
    pass
