"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the domain of an operation (bad regime, control, range)."""


class ConfigurationError(ValueError):
    """Inconsistent or unusable problem configuration."""


class DegenerateStateError(ArithmeticError):
    """Transition normalizer vanishes at a grid state."""


class PreconditionError(ValueError):
    """Operation requested outside the branch where it is defined."""


class TruncationError(ValueError):
    """No truncation level satisfies the drift condition; pick U by hand."""


class PolicyError(ValueError):
    """Policy cannot be evaluated, e.g. it contains a zero-time impulse cycle."""


class NonConvergenceError(RuntimeError):
    def __init__(self, message, last_increment, iterations):
        super().__init__(message)
        self.last_increment = last_increment
        self.iterations = iterations
