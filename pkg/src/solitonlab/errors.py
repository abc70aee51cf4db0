class SolitonLabError(ValueError):
    """Base class for rejected inputs."""


class DegenerateMetricError(SolitonLabError):
    """The coordinate tangent vectors fail to span an n-plane at some node."""

    def __init__(self, message, node=None, s=None):
        super().__init__(message)
        self.node = node
        self.s = s


class UnsupportedOperation(SolitonLabError):
    """The operation needs structure the patch does not carry (e.g. Lagrangian frame)."""


class HypothesisViolation(SolitonLabError):
    """An input violates a hypothesis the identity being checked depends on."""
