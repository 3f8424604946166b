from rfoam.optim.adam import AdamState, adam_step
from rfoam.optim.config import TrainConfig, load_config, lr_schedule
from rfoam.optim.losses import psnr, rgb_loss
from rfoam.optim.quantile import WeightCDF, inverse_cdf, quantile_loss
from rfoam.optim.refine import densify, prune
from rfoam.optim.train import TrainResult, train

__all__ = [
    "AdamState",
    "TrainConfig",
    "TrainResult",
    "WeightCDF",
    "adam_step",
    "densify",
    "inverse_cdf",
    "load_config",
    "lr_schedule",
    "prune",
    "psnr",
    "quantile_loss",
    "rgb_loss",
    "train",
]
