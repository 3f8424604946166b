from rfoam.io.checkpoint import load_checkpoint, save_checkpoint
from rfoam.io.datasets import PosedDataset, load_dataset, save_dataset
from rfoam.io.images import decode_srgb, encode_srgb, load_png, save_float, save_png
from rfoam.io.sfm import SfmPoints, load_sfm
from rfoam.io.synthetic import generate_synthetic

__all__ = [
    "PosedDataset",
    "SfmPoints",
    "decode_srgb",
    "encode_srgb",
    "generate_synthetic",
    "load_checkpoint",
    "load_dataset",
    "load_png",
    "load_sfm",
    "save_checkpoint",
    "save_dataset",
    "save_float",
    "save_png",
]
