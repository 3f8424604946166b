"""Image encode/decode: linear float internally, gamma-2.2 8-bit PNG on disk."""

import numpy as np
from PIL import Image

GAMMA = 2.2


def encode_srgb(img):
    """Linear [0,1] floats to 8-bit display values (gamma 2.2)."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return (np.round(255.0 * img ** (1.0 / GAMMA))).astype(np.uint8)


def decode_srgb(raw):
    """8-bit display values back to linear floats."""
    return (np.asarray(raw, dtype=np.float64) / 255.0) ** GAMMA


def save_png(img, path):
    """Write a linear float (H, W, 3) image as an 8-bit PNG."""
    Image.fromarray(encode_srgb(img), mode="RGB").save(path, format="PNG")


def png_bytes(img):
    import io as _io

    buf = _io.BytesIO()
    Image.fromarray(encode_srgb(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def load_png(path):
    """Read a PNG into a linear float (H, W, 3) array."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return decode_srgb(arr)


def save_float(img, path):
    """Raw float dump (.npy, float32 linear) for metric computation."""
    np.save(path, np.asarray(img, dtype=np.float32))
