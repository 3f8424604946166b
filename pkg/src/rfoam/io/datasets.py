"""Posed-image datasets: a transforms.json manifest plus per-frame images.

Manifest schema: {"camera_angle_x": float, "frames": [{"file_path": str,
"transform_matrix": 4x4 nested lists}, ...]}. Poses are world-from-camera
with the camera looking down -z (identity pose: origin, looking along -z).
Every 8th image is held out (frames 8, 16, ... in file order).
"""

import json
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from rfoam.errors import MissingImage, ParseError
from rfoam.io.images import load_png, save_png
from rfoam.tracer.camera import PINHOLE, CameraModel


@dataclass
class PosedDataset:
    train_cameras: List[CameraModel]
    train_images: List[np.ndarray]           # linear float (H, W, 3)
    holdout_cameras: List[CameraModel]
    holdout_images: List[np.ndarray]
    camera_angle_x: float
    train_names: List[str] = field(default_factory=list)
    holdout_names: List[str] = field(default_factory=list)

    @property
    def n_frames(self):
        return len(self.train_cameras) + len(self.holdout_cameras)

    def all_cameras(self):
        return list(self.train_cameras) + list(self.holdout_cameras)

    def all_images(self):
        return list(self.train_images) + list(self.holdout_images)


def _holdout_mask(n):
    idx = np.arange(n)
    return (idx + 1) % 8 == 0


def split_frames(cameras, images, names=None):
    names = names or [f"r_{k}" for k in range(len(cameras))]
    hold = _holdout_mask(len(cameras))
    tr = [k for k in range(len(cameras)) if not hold[k]]
    ho = [k for k in range(len(cameras)) if hold[k]]
    return PosedDataset(
        [cameras[k] for k in tr], [images[k] for k in tr],
        [cameras[k] for k in ho], [images[k] for k in ho],
        camera_angle_x=2.0 * np.arctan(0.5 * cameras[0].width / cameras[0].focal),
        train_names=[names[k] for k in tr],
        holdout_names=[names[k] for k in ho],
    )


def load_dataset(path):
    """Read a dataset directory (transforms.json + images)."""
    manifest = os.path.join(path, "transforms.json")
    try:
        with open(manifest, "r") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ParseError(f"{manifest}: not found")
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest}:{exc.lineno}:{exc.colno}: {exc.msg}")
    if "camera_angle_x" not in data or "frames" not in data:
        raise ParseError(f"{manifest}: missing camera_angle_x or frames")
    angle_x = float(data["camera_angle_x"])
    cameras = []
    images = []
    names = []
    for k, frame in enumerate(data["frames"]):
        if "transform_matrix" not in frame or "file_path" not in frame:
            raise ParseError(f"{manifest}: frame {k} missing keys")
        pose = np.asarray(frame["transform_matrix"], dtype=np.float64)
        if pose.shape != (4, 4):
            raise ParseError(f"{manifest}: frame {k} transform is not 4x4")
        rel = frame["file_path"]
        img_path = os.path.join(path, rel)
        if not os.path.exists(img_path):
            if os.path.exists(img_path + ".png"):
                img_path += ".png"
            else:
                raise MissingImage(f"frame {k}: {img_path}(.png) not found")
        img = load_png(img_path)
        h, w = img.shape[:2]
        cameras.append(CameraModel.from_angle_x(PINHOLE, w, h, angle_x, pose))
        images.append(img)
        names.append(os.path.splitext(os.path.basename(rel))[0])
    if not cameras:
        raise ParseError(f"{manifest}: no frames")
    return split_frames(cameras, images, names)


def save_dataset(cameras, images, angle_x, path, names=None):
    """Write images + transforms.json in the layout load_dataset expects."""
    os.makedirs(os.path.join(path, "frames"), exist_ok=True)
    frames = []
    names = names or [f"r_{k}" for k in range(len(cameras))]
    for cam, img, name in zip(cameras, images, names):
        rel = f"frames/{name}.png"
        save_png(img, os.path.join(path, rel))
        frames.append({
            "file_path": rel,
            "transform_matrix": cam.pose.tolist(),
        })
    with open(os.path.join(path, "transforms.json"), "w") as fh:
        json.dump({"camera_angle_x": angle_x, "frames": frames}, fh, indent=1)
