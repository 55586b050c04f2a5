"""Exception types shared across the simulator."""


class CableFemError(Exception):
    """Base class for all simulator errors."""


class DomainError(CableFemError, ValueError):
    """An argument is outside its mathematical domain."""


class DegenerateElementError(CableFemError):
    """Two element end nodes are (numerically) coincident."""


class MeshError(CableFemError):
    """Mesh is empty, malformed, or could not be parsed."""


class ScenarioError(CableFemError):
    """Scenario file is missing, malformed, or fails schema validation."""


class NonConvergenceError(CableFemError):
    """Solver hit its iteration budget before reaching the tolerances.

    Carries the best iterate so callers can retry with a smaller step.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InfeasibleError(CableFemError):
    """Constraints admit no solution; carries the infeasibility certificate."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class EngineError(CableFemError):
    """A frame failed even after the retry with halved prescribed increments."""
