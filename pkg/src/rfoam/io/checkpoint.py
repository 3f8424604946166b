"""Scene checkpoints: magic "RFOAM1", little-endian, float32 parameter arrays.

Layout: 6-byte magic, uint32 site count, then contiguous blocks of
positions (n x 3 f32), raw densities (n f32), SH coefficients (n x 48 f32),
and the background RGB (3 f32). Adjacency is rebuilt on load, never stored.
"""

import struct

import numpy as np

from rfoam.errors import CorruptCheckpoint
from rfoam.foam import FoamScene

MAGIC = b"RFOAM1"


def save_checkpoint(scene, path):
    n = scene.n_sites
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", n))
        fh.write(np.ascontiguousarray(scene.positions, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(scene.raw_density, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(scene.sh_coeffs, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(scene.background, dtype="<f4").tobytes())


def load_checkpoint(path, rebuild=True):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic")
    (n,) = struct.unpack_from("<I", blob, len(MAGIC))
    expect = len(MAGIC) + 4 + 4 * (n * 3 + n + n * 48 + 3)
    if len(blob) != expect:
        raise CorruptCheckpoint(
            f"{path}: expected {expect} bytes for {n} sites, got {len(blob)}"
        )
    off = len(MAGIC) + 4
    positions = np.frombuffer(blob, "<f4", n * 3, off).reshape(n, 3)
    off += 4 * n * 3
    raw_density = np.frombuffer(blob, "<f4", n, off)
    off += 4 * n
    sh = np.frombuffer(blob, "<f4", n * 48, off).reshape(n, 16, 3)
    off += 4 * n * 48
    background = np.frombuffer(blob, "<f4", 3, off)
    for name, arr in (("positions", positions), ("densities", raw_density),
                      ("sh", sh), ("background", background)):
        if not np.isfinite(arr).all():
            raise CorruptCheckpoint(f"{path}: non-finite {name}")
    scene = FoamScene(
        positions.astype(np.float64),
        raw_density.astype(np.float64),
        sh.astype(np.float64),
        background.astype(np.float64),
    )
    if rebuild:
        scene.rebuild()
    return scene
