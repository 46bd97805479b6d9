"""Exception hierarchy shared by all bscflow modules."""


class BscFlowError(Exception):
    """Base class for every error raised by this package."""


# geometry

class GeometryError(BscFlowError, ValueError):
    pass


class NonConvex(GeometryError):
    def __init__(self, index):
        super().__init__(f"polygon is not convex at vertex {index}")
        self.index = index


class DegenerateArea(GeometryError):
    pass


class DuplicateVertex(GeometryError):
    def __init__(self, index):
        super().__init__(f"vertex {index} duplicates its predecessor")
        self.index = index


class TargetTooCoarse(GeometryError):
    pass


# bounded slope condition

class EmptyTrace(BscFlowError, ValueError):
    pass


class CertificationFailed(BscFlowError):
    def __init__(self, node, violation):
        super().__init__(
            f"affine support violates the datum at node {node} by {violation:.3e}")
        self.node = node
        self.violation = violation


# integrands

class UnknownFamily(BscFlowError, KeyError):
    pass


class BadParams(BscFlowError, ValueError):
    pass


class QuadratureBudgetExceeded(BscFlowError):
    pass


# scheme

class SchemeError(BscFlowError):
    """Raised for solver failures; carries the failing step when known."""

    step = None


class NonConvergence(SchemeError):
    def __init__(self, max_iter, iterate=None, diagnostics=None):
        super().__init__(f"ADMM did not converge within {max_iter} iterations")
        self.max_iter = max_iter
        self.iterate = iterate
        self.diagnostics = diagnostics


class InfeasibleBC(SchemeError, ValueError):
    pass


class MissingTimeDerivativeBound(BscFlowError, ValueError):
    pass


# analysis

class BoundaryMismatch(BscFlowError, ValueError):
    pass


class MissingBscCertificate(BscFlowError, ValueError):
    pass


class MeshMismatch(BscFlowError, ValueError):
    pass


class MissingGradient(BscFlowError, ValueError):
    pass


# cli

class ConfigError(BscFlowError, ValueError):
    pass
