"""Exception types shared across the package."""


class NGLabError(Exception):
    """Base class for package-specific errors."""


class InfeasibleScenarioError(NGLabError, ValueError):
    """Committed fractions / initial allocation cannot form a valid population."""


class StateSpaceLimitError(NGLabError, ValueError):
    """Requested opinion count exceeds the configured full-enumeration cap."""


class StiffnessError(NGLabError, RuntimeError):
    """Integrator step size underflowed; carries the last state for diagnosis."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class ConfigError(NGLabError, ValueError):
    """Configuration failed validation; ``errors`` lists every violation with its path."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
