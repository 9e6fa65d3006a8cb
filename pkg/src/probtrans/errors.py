"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(ValueError):
    """A configuration value is invalid."""


class CapabilityError(TypeError):
    """A constraint set lacks a capability the caller asked for."""


class GeodesicBallError(ValueError):
    """Atoms are too spread out for a unique Frechet mean."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, grad_norm):
        super().__init__(f"{message} (last gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite."""
