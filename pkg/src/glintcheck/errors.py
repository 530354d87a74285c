"""Exception hierarchy shared by all stages."""


class GlintError(Exception):
    """Base class for every error raised by glintcheck."""

    stage = "general"


class GeometryError(GlintError):
    stage = "geometry"


class NonPositiveDepth(GeometryError):
    pass


class ZeroVector(GeometryError):
    pass


class DegenerateConfiguration(GeometryError):
    pass


class InsufficientCorrespondences(GeometryError):
    pass


class Divergence(GeometryError):
    pass


class MeshFormatError(GeometryError):
    pass


class EyeError(GlintError):
    stage = "eye"


class DegenerateAnnotation(EyeError):
    pass


class RayMissesSphere(EyeError):
    pass


class EmptyEstimate(EyeError):
    pass


class BRDFError(GlintError):
    stage = "brdf"


class DegenerateHalfway(BRDFError):
    pass


class OutOfDomain(BRDFError):
    pass


class BackFacing(GlintError):
    """Surface faces away from the light or the camera."""


class PoseError(GlintError):
    stage = "pose"


class EmptyProjection(PoseError):
    pass


class HighlightError(GlintError):
    stage = "highlights"


class EmptyNormalMap(HighlightError):
    pass


class AllZeroMap(HighlightError):
    pass


class DimensionMismatch(GlintError):
    pass


class BothEmpty(HighlightError):
    """Neither mask has any highlight pixel; the comparison is inconclusive."""


class MorphError(GlintError):
    stage = "morph"


class LengthMismatch(MorphError):
    pass


class Collinear(MorphError):
    pass


class DuplicatePoints(MorphError):
    pass


class TopologyMismatch(MorphError):
    pass


class DegenerateTriangle(MorphError):
    pass


class OracleError(GlintError):
    stage = "oracle"


class NoVisibleHighlight(OracleError):
    pass


class SceneFormatError(OracleError):
    pass
