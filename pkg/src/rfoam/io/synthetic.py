"""Procedural ground-truth scenes rendered with the engine itself.

Each builtin constructs a foam with dense high-density sites inside the
solids, a zero-density shell just outside each surface (the empty cells that
define the boundary), and sparse zero-density air sites, then renders the
training views with the production renderer. Reconstructing from these
images is therefore a self-consistent inverse problem whose optimum is known
to be reachable.
"""

import numpy as np

from rfoam.errors import UnknownSpec
from rfoam.foam import FoamScene
from rfoam.io.datasets import split_frames
from rfoam.tracer.camera import PINHOLE, CameraModel, look_at
from rfoam import sh as sh_mod

SOLID_RAW_DENSITY = 400.0
EMPTY_RAW_DENSITY = -30.0
CAMERA_ANGLE_X = 0.7


def _jittered_grid(lo, hi, spacing, rng, jitter=0.2):
    axes = [np.arange(lo[k] + spacing / 2, hi[k], spacing) for k in range(3)]
    if any(len(a) == 0 for a in axes):
        return np.zeros((0, 3))
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return g + rng.uniform(-jitter * spacing, jitter * spacing, g.shape)


class _Box:
    def __init__(self, center, half, color):
        self.center = np.asarray(center, dtype=np.float64)
        self.half = np.asarray(half, dtype=np.float64)
        self.color = np.asarray(color, dtype=np.float64)

    def contains(self, pts, pad=0.0):
        d = np.abs(pts - self.center) - (self.half + pad)
        return (d < 0).all(axis=1)

    def interior_sites(self, rng, spacing):
        return _jittered_grid(self.center - self.half, self.center + self.half,
                              spacing, rng)

    def shell_sites(self, rng, spacing, offset):
        """One layer of sites just outside each face."""
        out = []
        lo = self.center - self.half
        hi = self.center + self.half
        for axis in range(3):
            for sign in (-1.0, 1.0):
                u, v = [k for k in range(3) if k != axis]
                uu = np.arange(lo[u] + spacing / 2, hi[u], spacing)
                vv = np.arange(lo[v] + spacing / 2, hi[v], spacing)
                if len(uu) == 0 or len(vv) == 0:
                    continue
                gu, gv = np.meshgrid(uu, vv, indexing="ij")
                face = np.zeros((gu.size, 3))
                face[:, u] = gu.reshape(-1)
                face[:, v] = gv.reshape(-1)
                face[:, axis] = (self.center[axis]
                                 + sign * (self.half[axis] + offset))
                face += rng.uniform(-0.15 * spacing, 0.15 * spacing, face.shape)
                out.append(face)
        return np.concatenate(out, axis=0)


def _boxes_solids():
    ground = _Box((0.0, -0.075, 0.0), (1.2, 0.075, 1.2), (0.72, 0.70, 0.66))
    a = _Box((-0.45, 0.20, -0.35), (0.22, 0.20, 0.22), (0.80, 0.12, 0.10))
    b = _Box((0.45, 0.14, 0.30), (0.20, 0.14, 0.18), (0.10, 0.62, 0.18))
    c = _Box((0.10, 0.11, -0.52), (0.25, 0.11, 0.15), (0.12, 0.22, 0.78))
    return [ground, a, b, c]


def _sphere_color(pts):
    bands = 0.5 + 0.45 * np.sin(9.0 * pts[:, 1] + 2.0 * pts[:, 0])
    color = np.stack([
        bands,
        0.25 + 0.5 * (1.0 - bands),
        0.35 + 0.3 * np.cos(7.0 * pts[:, 2]),
    ], axis=1)
    return np.clip(color, 0.02, 0.98)


def _build_boxes_scene(rng):
    solids = _boxes_solids()
    positions = []
    colors = []
    raw = []
    spacing = {0: 0.11, 1: 0.065, 2: 0.06, 3: 0.062}
    for k, s in enumerate(solids):
        interior = s.interior_sites(rng, spacing[k])
        positions.append(interior)
        colors.append(np.tile(s.color, (len(interior), 1)))
        raw.append(np.full(len(interior), SOLID_RAW_DENSITY))
        shell = s.shell_sites(rng, spacing[k], 0.5 * spacing[k])
        inside_any = np.zeros(len(shell), dtype=bool)
        for other in solids:
            inside_any |= other.contains(shell)
        shell = shell[~inside_any]
        positions.append(shell)
        colors.append(np.tile(s.color, (len(shell), 1)))
        raw.append(np.full(len(shell), EMPTY_RAW_DENSITY))
    air = _jittered_grid((-1.7, -0.3, -1.7), (1.7, 1.7, 1.7), 0.34, rng)
    keep = np.ones(len(air), dtype=bool)
    for s in solids:
        keep &= ~s.contains(air, pad=0.05)
    air = air[keep]
    positions.append(air)
    colors.append(np.tile((0.5, 0.5, 0.5), (len(air), 1)))
    raw.append(np.full(len(air), EMPTY_RAW_DENSITY))

    scene = FoamScene.from_points(
        np.concatenate(positions), background=(1.0, 1.0, 1.0)
    )
    scene.raw_density[:] = np.concatenate(raw)
    scene.sh_coeffs[:, 0, :] = sh_mod.color_to_dc(np.concatenate(colors))
    return scene, np.array([0.0, 0.25, 0.0]), 2.7


def _build_sphere_scene(rng):
    center = np.array([0.0, 0.55, 0.0])
    radius = 0.45
    spacing = 0.06
    box = _jittered_grid(center - radius, center + radius, spacing, rng)
    r = np.linalg.norm(box - center, axis=1)
    interior = box[r < radius - 0.25 * spacing]
    # Shell just outside the surface, on a jittered sphere.
    n_shell = 2200
    dirs = rng.normal(size=(n_shell, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    shell = center + dirs * (radius + 0.5 * spacing
                             + rng.uniform(0, 0.2 * spacing, (n_shell, 1)))
    air = _jittered_grid(center - 1.4, center + 1.4, 0.3, rng)
    keep = np.linalg.norm(air - center, axis=1) > radius + 0.08
    air = air[keep]

    positions = np.concatenate([interior, shell, air])
    raw = np.concatenate([
        np.full(len(interior), SOLID_RAW_DENSITY),
        np.full(len(shell), EMPTY_RAW_DENSITY),
        np.full(len(air), EMPTY_RAW_DENSITY),
    ])
    colors = np.concatenate([
        _sphere_color(interior),
        _sphere_color(shell),
        np.tile((0.5, 0.5, 0.5), (len(air), 1)),
    ])
    scene = FoamScene.from_points(positions, background=(1.0, 1.0, 1.0))
    scene.raw_density[:] = raw
    scene.sh_coeffs[:, 0, :] = sh_mod.color_to_dc(colors)
    return scene, center, 2.4


_BUILTINS = {"boxes": _build_boxes_scene, "sphere": _build_sphere_scene}


def generate_synthetic(name, views=30, resolution=128, seed=0, render=True,
                       workers=None):
    """(PosedDataset, ground-truth FoamScene) for a builtin scene name.

    Views sit on two hemisphere rings around the scene center; images are
    rendered with the production renderer (exact compositing, epsilon 0),
    so re-rendering a training pose reproduces its image bit for bit.
    """
    if name not in _BUILTINS:
        raise UnknownSpec(
            f"unknown synthetic scene {name!r}; have {sorted(_BUILTINS)}"
        )
    rng = np.random.default_rng(seed)
    scene, target, cam_radius = _BUILTINS[name](rng)
    scene.rebuild()

    cameras = []
    for k in range(views):
        ring = k % 2
        elevation = (0.3, 0.62)[ring]
        azimuth = 2.0 * np.pi * k / views + 0.35 * ring
        eye = target + cam_radius * np.array([
            np.cos(elevation) * np.sin(azimuth),
            np.sin(elevation),
            np.cos(elevation) * np.cos(azimuth),
        ])
        pose = look_at(eye, target)
        cameras.append(CameraModel.from_angle_x(
            PINHOLE, resolution, resolution, CAMERA_ANGLE_X, pose
        ))

    images = []
    if render:
        from rfoam.diffrender.render import render_image

        for cam in cameras:
            img = render_image(scene, cam, epsilon=0.0, workers=workers)
            images.append(np.clip(img, 0.0, 1.0))
    else:
        images = [np.zeros((resolution, resolution, 3)) for _ in cameras]
    dataset = split_frames(cameras, images)
    return dataset, scene


def occupancy_test(name, points, pad=0.02):
    """True for points inside the ground-truth solids of a builtin scene."""
    points = np.asarray(points, dtype=np.float64)
    if name == "boxes":
        inside = np.zeros(len(points), dtype=bool)
        for s in _boxes_solids():
            inside |= s.contains(points, pad=pad)
        return inside
    if name == "sphere":
        center = np.array([0.0, 0.55, 0.0])
        return np.linalg.norm(points - center, axis=1) < 0.45 + pad
    raise UnknownSpec(name)
