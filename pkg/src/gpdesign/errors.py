"""Exception hierarchy shared across the package."""


class GPDesignError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(GPDesignError):
    """Invalid configuration: unknown scenario, bad thresholds, shape mismatch."""


class ConvergenceError(GPDesignError):
    """Optimizer failed to converge; carries the last iterate for diagnosis."""

    def __init__(self, message, last_iterate=None, grad_norm=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.grad_norm = grad_norm


class HessianError(GPDesignError):
    """Indefinite or singular Hessian where positive definiteness is required."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class NumericalFailure(GPDesignError):
    """A simulation stage exceeded its failure budget or produced non-finite output."""


class TargetUnreachableError(GPDesignError):
    """No admissible point satisfies the requested operating characteristic."""

    def __init__(self, message, best_value=None):
        super().__init__(message)
        self.best_value = best_value
