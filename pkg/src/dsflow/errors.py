"""Exception hierarchy shared by all dsflow modules."""


class DsflowError(Exception):
    """Base class for all errors raised by the package."""


class MeshError(DsflowError):
    pass


class NonConvexCell(MeshError):
    def __init__(self, cell, message=None):
        self.cell = cell
        super().__init__(message or f"cell {cell} is not strictly convex")


class DegenerateCell(MeshError):
    def __init__(self, cell, message=None):
        self.cell = cell
        super().__init__(message or f"cell {cell} has zero area")


class NonConformingMesh(MeshError):
    def __init__(self, edge, message=None):
        self.edge = edge
        super().__init__(message or f"edge {edge} is not shared consistently")


class NonPositiveJacobian(MeshError):
    def __init__(self, cell, ref_point=None):
        self.cell = cell
        self.ref_point = ref_point
        super().__init__(f"non-positive Jacobian in cell {cell} at {ref_point}")


class DistortionTooLarge(MeshError):
    pass


class ParseError(MeshError):
    def __init__(self, line, message="malformed mesh file"):
        self.line = line
        super().__init__(f"line {line}: {message}")


class PointOutsideCell(DsflowError):
    pass


class UnsupportedOrder(DsflowError):
    pass


class InvalidIndex(DsflowError):
    pass


class SingularVandermonde(DsflowError):
    def __init__(self, cell, condition):
        self.cell = cell
        self.condition = condition
        super().__init__(f"nodal Vandermonde of cell {cell} is singular (cond ~ {condition:.3e})")


class DenominatorNonPositive(DsflowError):
    pass


class ZeroTotalMobility(DsflowError):
    pass


class MissingBoundaryCondition(DsflowError):
    def __init__(self, edge, tag=None):
        self.edge = edge
        self.tag = tag
        super().__init__(f"no boundary condition for edge {edge} (tag {tag!r})")


class NonPositiveMobility(DsflowError):
    pass


class SingularSystem(DsflowError):
    pass


class SolverFailure(DsflowError):
    def __init__(self, residual, message="linear solve failed"):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class InflowDataMissing(DsflowError):
    pass


class ConfigError(DsflowError):
    def __init__(self, key, message=None):
        self.key = key
        super().__init__(message or f"invalid configuration key {key!r}")


class UsageError(DsflowError):
    pass


class IoError(DsflowError):
    pass
