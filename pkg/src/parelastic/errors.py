"""Exception types shared across the package."""


class ParelasticError(Exception):
    """Base class for all package-specific errors."""


class DegenerateGeometryError(ParelasticError):
    """A geometric quantity (projection, moment arm) is undefined at this configuration."""


class IllConditionedError(ParelasticError):
    """A matrix required for a solve is numerically singular."""


class DivergenceError(ParelasticError):
    """Simulation produced a non-finite state."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"non-finite state at step {step}")


class EquilibriumSolveError(ParelasticError):
    """Newton iteration for the unactuated equilibrium failed to converge."""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"no convergence after {iterations} iterations (last residual {residual:.3e})"
        )


class UnsupportedFamilyError(ParelasticError):
    """Operation is only defined for a subset of coupling families."""


class DegenerateDatasetError(ParelasticError):
    """Identification dataset carries no usable regressor variance."""


class ConfigError(ParelasticError):
    """Scenario configuration file is missing, malformed, or violates an invariant."""
