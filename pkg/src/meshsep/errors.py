"""Exception hierarchy."""


class MeshsepError(Exception):
    pass


class GeometryError(MeshsepError, ValueError):
    pass


class SharedVertex(GeometryError):
    pass


class UnsupportedPair(GeometryError):
    pass


class CoincidentPoints(GeometryError):
    pass


class DegenerateTriangle(GeometryError):
    pass


class DegenerateEdge(GeometryError):
    pass


class MeshError(MeshsepError, ValueError):
    pass


class IndexOutOfRange(MeshError):
    pass


class DuplicateTriangle(MeshError):
    pass


class MaxIterations(MeshsepError):
    """Expansion did not reach d-separation within its iteration budget."""


class ScalingExhausted(MeshsepError):
    """The alpha-rescaling loop never produced an accurate enough LP solution."""


class InsufficientSeparation(MeshsepError):
    pass


class CertificationFailure(MeshsepError):
    pass


class ConfigError(MeshsepError, ValueError):
    pass


class ParseError(MeshsepError, ValueError):
    def __init__(self, msg, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(loc + msg)
        self.line = line
        self.column = column


class UnsupportedFormat(MeshsepError, ValueError):
    pass


class PrecisionLoss(MeshsepError, ValueError):
    pass
