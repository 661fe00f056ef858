"""Exception types shared across the package."""


class DomainError(ValueError):
    """Evaluation requested outside the domain an object was built on."""


class PotentialError(ValueError):
    """Potential data is unusable (non-Hermitian, nonuniform grid, bad file)."""


class ControlError(ValueError):
    """Boundary control violates its contract (support, sampling, dimension)."""


class ConvergenceError(RuntimeError):
    """Iteration failed to reach the requested tolerance within the sweep cap."""


class SingularSystemError(RuntimeError):
    """A diagonal block (or a normalization matrix) is numerically singular."""


class CertificationError(RuntimeError):
    """An empirically measured ratio exceeded its analytic bound."""


class ConfigError(ValueError):
    """A run configuration or spec file could not be parsed."""
