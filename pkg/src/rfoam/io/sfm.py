"""Sparse point-cloud ingestion: PLY (ascii / binary little-endian) and
COLMAP points3D.txt. Points are deduplicated against the geometry tolerance
with a warning; colors, when present, seed the DC color coefficients."""

import struct
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from rfoam.errors import ParseError, UnsupportedFormat


@dataclass
class SfmPoints:
    positions: np.ndarray              # (n, 3) float64
    colors: Optional[np.ndarray] = None  # (n, 3) float64 in [0, 1]


def load_sfm(path):
    path = str(path)
    with open(path, "rb") as fh:
        head = fh.read(64)
    if head.startswith(b"ply"):
        return _load_ply(path)
    if path.endswith(".txt") or head.lstrip().startswith(b"#"):
        return _load_points3d(path)
    raise UnsupportedFormat(f"{path}: neither PLY nor COLMAP points3D.txt")


def _dedup(points, colors, path):
    from rfoam.optim.train import dedup_mask

    if len(points) < 2:
        return points, colors
    keep = dedup_mask(points)
    dropped = int((~keep).sum())
    if dropped:
        warnings.warn(
            f"{path}: dropped {dropped} point(s) within duplicate tolerance"
        )
        points = points[keep]
        if colors is not None:
            colors = colors[keep]
    return points, colors


def _load_points3d(path):
    positions = []
    colors = []
    with open(path, "r", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 7:
                raise ParseError(f"{path}:{lineno}: expected at least 7 columns")
            try:
                positions.append([float(parts[1]), float(parts[2]), float(parts[3])])
                colors.append([int(parts[4]), int(parts[5]), int(parts[6])])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not positions:
        raise ParseError(f"{path}: no points found")
    pos = np.asarray(positions, dtype=np.float64)
    col = np.asarray(colors, dtype=np.float64) / 255.0
    if not np.isfinite(pos).all():
        raise ParseError(f"{path}: non-finite coordinates")
    pos, col = _dedup(pos, col, path)
    return SfmPoints(pos, col)


_PLY_TYPES = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}

_COLOR_NAMES = {"red": 0, "r": 0, "green": 1, "g": 1, "blue": 2, "b": 2}


def _load_ply(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        header_end = blob.index(b"end_header\n") + len(b"end_header\n")
    except ValueError:
        raise ParseError(f"{path}: missing end_header")
    header = blob[:header_end].decode("ascii", errors="replace").splitlines()
    fmt = None
    n_vertex = None
    props = []          # (name, type) for the vertex element
    in_vertex = False
    for lineno, line in enumerate(header, 1):
        parts = line.strip().split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1] == "ascii":
                fmt = "ascii"
            elif parts[1] == "binary_little_endian":
                fmt = "binary"
            else:
                raise UnsupportedFormat(f"{path}:{lineno}: format {parts[1]}")
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                try:
                    n_vertex = int(parts[2])
                except (IndexError, ValueError):
                    raise ParseError(f"{path}:{lineno}: bad vertex count")
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise UnsupportedFormat(f"{path}:{lineno}: list property on vertex")
            if parts[1] not in _PLY_TYPES:
                raise UnsupportedFormat(f"{path}:{lineno}: type {parts[1]}")
            props.append((parts[2], parts[1]))
    if fmt is None or n_vertex is None:
        raise ParseError(f"{path}: incomplete header")
    names = [p[0] for p in props]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise ParseError(f"{path}: vertex element lacks property {axis!r}")

    color_cols = {}
    for name, _ in props:
        if name.lower() in _COLOR_NAMES:
            color_cols[_COLOR_NAMES[name.lower()]] = name

    if fmt == "ascii":
        body = blob[header_end:].decode("ascii", errors="replace").splitlines()
        rows = []
        count = 0
        for lineno, line in enumerate(body, len(header) + 1):
            line = line.strip()
            if not line:
                continue
            if count >= n_vertex:
                break
            parts = line.split()
            if len(parts) < len(props):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(props)} values"
                )
            try:
                rows.append([float(v) for v in parts[: len(props)]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            count += 1
        if count < n_vertex:
            raise ParseError(f"{path}: expected {n_vertex} vertices, got {count}")
        table = {name: np.array([r[k] for r in rows]) for k, (name, _) in enumerate(props)}
        scale = {name: 255.0 if typ in ("uchar", "uint8") else 1.0 for name, typ in props}
    else:
        dtype = np.dtype([(name, "<" + _PLY_TYPES[typ][0]) for name, typ in props])
        need = header_end + dtype.itemsize * n_vertex
        if len(blob) < need:
            raise ParseError(
                f"{path}: truncated at byte {len(blob)}, need {need}"
            )
        rec = np.frombuffer(blob, dtype, n_vertex, header_end)
        table = {name: rec[name].astype(np.float64) for name, _ in props}
        scale = {name: 255.0 if typ in ("uchar", "uint8") else 1.0 for name, typ in props}

    pos = np.stack([table["x"], table["y"], table["z"]], axis=1)
    if not np.isfinite(pos).all():
        raise ParseError(f"{path}: non-finite coordinates")
    colors = None
    if len(color_cols) == 3:
        colors = np.stack(
            [table[color_cols[k]] / scale[color_cols[k]] for k in range(3)], axis=1
        )
    pos, colors = _dedup(pos, colors, path)
    return SfmPoints(pos, colors)


def save_ply(points, path, colors=None):
    """ASCII PLY writer (test fixtures, synthetic seeds)."""
    points = np.asarray(points, dtype=np.float64)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(points)}",
             "property float x", "property float y", "property float z"]
    if colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        for k, p in enumerate(points):
            row = f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}"
            if colors is not None:
                c = (np.clip(colors[k], 0, 1) * 255).astype(int)
                row += f" {c[0]} {c[1]} {c[2]}"
            fh.write(row + "\n")
