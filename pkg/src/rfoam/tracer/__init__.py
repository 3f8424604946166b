from rfoam.tracer.camera import CameraModel, camera_rays
from rfoam.tracer.rays import (
    Ray,
    RaySegments,
    apply_effect,
    intersect_face,
    trace,
)

__all__ = [
    "CameraModel",
    "Ray",
    "RaySegments",
    "apply_effect",
    "camera_rays",
    "intersect_face",
    "trace",
]
