from rfoam.diffrender.composite import (
    CompositeResult,
    RayGradient,
    composite,
    composite_backward,
    position_backward,
)
from rfoam.diffrender.render import RenderStats, render_image, render_rays_with_gradients

__all__ = [
    "CompositeResult",
    "RayGradient",
    "composite",
    "composite_backward",
    "position_backward",
    "RenderStats",
    "render_image",
    "render_rays_with_gradients",
]
