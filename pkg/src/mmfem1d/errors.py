"""Exception hierarchy. Numerical failures abort a run; they are never repaired."""


class ConfigError(ValueError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """Base for fatal numerical failures (CLI exit code 3)."""


class MeshTanglingError(NumericalError):
    """Vertex ordering lost after a mesh move."""


class SingularSystemError(NumericalError):
    """Zero pivot while factorizing a linear system."""

    def __init__(self, dof_index: int, what: str = "system"):
        self.dof_index = dof_index
        super().__init__(f"singular {what}: zero pivot at DOF {dof_index}")


class DegenerateMonitorError(NumericalError):
    """Monitor normalizer vanished."""


class DegenerateWeightError(NumericalError):
    """Weighted stiffness operator became singular (weight vanished)."""
