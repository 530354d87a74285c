"""Morph detection from inconsistent specular highlights on the nose.

Light directions are recovered from catch-lights in the eyes, a 3-D face
mesh is posed to the image, and skin highlights synthesized from that
geometry are compared against the highlights visible in the photograph.
"""

from .brdf import SkinReflectance, torrance_sparrow
from .config import PipelineConfig, load_config
from .errors import GlintError
from .eye import EyeAnnotation, EyeGeometry, EyePose, LightEstimate
from .geometry import PinholeCamera, RigidTransform, TriangleMesh
from .imageio import RasterImage, load_image, save_image
from .meshio import load_landmarks, load_obj
from .pipeline import estimate_lights, verify

__all__ = [
    "EyeAnnotation",
    "EyeGeometry",
    "EyePose",
    "GlintError",
    "LightEstimate",
    "PinholeCamera",
    "PipelineConfig",
    "RasterImage",
    "RigidTransform",
    "SkinReflectance",
    "TriangleMesh",
    "estimate_lights",
    "load_config",
    "load_image",
    "load_landmarks",
    "load_obj",
    "save_image",
    "torrance_sparrow",
    "verify",
]
__version__ = "0.1.0"
