"""Exception hierarchy shared by every module."""


class PrefFrameError(Exception):
    """Base class for all errors raised by this package."""


class FrameError(PrefFrameError):
    pass


class NotStochastic(FrameError):
    pass


class Singular(FrameError):
    pass


class NotReversible(FrameError):
    pass


class DisconnectedFrame(FrameError):
    pass


class NoConvergence(FrameError):
    pass


class ModelError(PrefFrameError):
    pass


class ProbabilityOverflow(ModelError):
    """Some edge probability exceeds 1."""

    def __init__(self, max_value, message=None):
        self.max_value = float(max_value)
        super().__init__(message or f"edge probability {self.max_value:.6g} exceeds 1")


class EmptyCluster(ModelError):
    pass


class InvalidSpec(ModelError):
    pass


class InvalidProbability(ModelError):
    pass


class ZeroDegreeRow(ModelError):
    pass


class ZeroDegreeNode(PrefFrameError):
    """Raised when a Laplacian is requested for a matrix with empty rows."""

    def __init__(self, nodes, message=None):
        self.nodes = [int(i) for i in nodes]
        shown = self.nodes[:10]
        more = "" if len(self.nodes) <= 10 else f" (+{len(self.nodes) - 10} more)"
        super().__init__(message or f"zero degree at nodes {shown}{more}")


class EigensolverFailure(PrefFrameError):
    pass


class FrameMismatch(PrefFrameError):
    pass


class CertificateViolation(PrefFrameError):
    def __init__(self, lhs, rhs):
        self.lhs = float(lhs)
        self.rhs = float(rhs)
        super().__init__(f"spurious eigenvalue {self.lhs:.6g} exceeds bound {self.rhs:.6g}")


class DimensionMismatch(PrefFrameError):
    pass


class DegenerateInput(PrefFrameError):
    pass


class SizeMismatch(PrefFrameError):
    pass


class AssumptionViolated(PrefFrameError):
    pass


class ConfigError(PrefFrameError):
    pass


class ReplicateError(PrefFrameError):
    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"replicate {index}: {type(cause).__name__}: {cause}")
