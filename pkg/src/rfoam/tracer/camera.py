"""Camera models and ray generation.

Convention: poses are 4x4 world-from-camera matrices with the camera looking
down -z, x right, y up (the identity pose sits at the origin looking along
-z). Pixels are addressed (row, col) with rays cast through pixel centers;
the principal point defaults to the image center.
"""

from dataclasses import dataclass, field

import numpy as np

from rfoam.errors import OutOfBounds
from rfoam.tracer.rays import Ray

PINHOLE = "pinhole"
FISHEYE = "fisheye"


@dataclass
class CameraModel:
    kind: str
    width: int
    height: int
    focal: float
    pose: np.ndarray                      # 4x4 world-from-camera
    cx: float = None
    cy: float = None

    def __post_init__(self):
        if self.kind not in (PINHOLE, FISHEYE):
            raise ValueError(f"unknown camera kind {self.kind!r}")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be at least 1x1")
        if self.focal <= 0:
            raise ValueError("focal length must be positive")
        self.pose = np.asarray(self.pose, dtype=np.float64)
        if self.pose.shape != (4, 4):
            raise ValueError("pose must be a 4x4 matrix")
        if self.cx is None:
            self.cx = self.width / 2.0
        if self.cy is None:
            self.cy = self.height / 2.0

    @property
    def position(self):
        return self.pose[:3, 3]

    @property
    def rotation(self):
        return self.pose[:3, :3]

    @property
    def forward(self):
        return -self.pose[:3, 2]

    @classmethod
    def from_angle_x(cls, kind, width, height, camera_angle_x, pose):
        focal = 0.5 * width / np.tan(0.5 * float(camera_angle_x))
        return cls(kind, width, height, focal, pose)

    def with_pose(self, pose):
        return CameraModel(self.kind, self.width, self.height, self.focal,
                           pose, self.cx, self.cy)

    def ray_directions(self, rows=None, cols=None):
        """World-space unit directions through pixel centers, vectorized.

        Returns an (m, 3) array for the given row/col index arrays, or the
        full image (height*width, 3) in row-major order when omitted.
        """
        if rows is None:
            rr, cc = np.meshgrid(
                np.arange(self.height), np.arange(self.width), indexing="ij"
            )
            rows = rr.reshape(-1)
            cols = cc.reshape(-1)
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        u = (cols + 0.5 - self.cx) / self.focal
        v = -(rows + 0.5 - self.cy) / self.focal
        if self.kind == PINHOLE:
            d_cam = np.stack([u, v, -np.ones_like(u)], axis=-1)
        else:
            r = np.hypot(u, v)
            theta = r
            with np.errstate(invalid="ignore", divide="ignore"):
                sx = np.where(r > 0, np.sin(theta) * u / r, 0.0)
                sy = np.where(r > 0, np.sin(theta) * v / r, 0.0)
            d_cam = np.stack([sx, sy, -np.cos(theta)], axis=-1)
        d_world = d_cam @ self.rotation.T
        return d_world / np.linalg.norm(d_world, axis=-1, keepdims=True)


def camera_rays(camera, pixel):
    """Ray through one pixel center; pixel is (row, col)."""
    row, col = pixel
    if not (0 <= row < camera.height and 0 <= col < camera.width):
        raise OutOfBounds(f"pixel {pixel} outside {camera.height}x{camera.width}")
    d = camera.ray_directions(np.array([row]), np.array([col]))[0]
    return Ray(camera.position.copy(), d)


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """World-from-camera pose for a camera at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    z = eye - target
    z = z / np.linalg.norm(z)
    x = np.cross(up, z)
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        # Up parallel to view direction; pick any perpendicular.
        alt = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
        x = np.cross(alt, z)
        nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(z, x)
    pose = np.eye(4)
    pose[:3, 0] = x
    pose[:3, 1] = y
    pose[:3, 2] = z
    pose[:3, 3] = eye
    return pose


def orbit_poses(center, radius, elevation, count, start_azimuth=0.0):
    """Equally spaced look-at poses on a horizontal circle."""
    center = np.asarray(center, dtype=np.float64)
    poses = []
    for k in range(count):
        az = start_azimuth + 2.0 * np.pi * k / count
        eye = center + radius * np.array(
            [np.cos(elevation) * np.sin(az),
             np.sin(elevation),
             np.cos(elevation) * np.cos(az)]
        )
        poses.append(look_at(eye, center))
    return poses
