"""Photometric losses and image metrics."""

import numpy as np

from rfoam.errors import ShapeMismatch


def rgb_loss(rendered, target):
    """Mean squared error over pixels and channels."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if rendered.shape != target.shape:
        raise ShapeMismatch(
            f"image shapes differ: {rendered.shape} vs {target.shape}"
        )
    diff = rendered - target
    return float(np.mean(diff * diff))


def psnr(rendered, target):
    """10 log10(1 / MSE) for unit-range images."""
    mse = rgb_loss(rendered, target)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))
