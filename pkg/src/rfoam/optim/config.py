"""Training configuration and learning-rate schedules."""

import math
from dataclasses import dataclass, fields, replace

try:
    import tomllib
except ImportError:
    import tomli as tomllib


@dataclass
class TrainConfig:
    total_iters: int = 20000
    freeze_tail_iters: int = 2000

    lr_position_start: float = 2e-4
    lr_position_end: float = 2e-6
    lr_density_start: float = 1e-1
    lr_density_decay: float = 0.1
    lr_sh_start: float = 5e-3
    lr_sh_decay: float = 0.1
    sh_warmup_fraction: float = 0.25

    max_points: int = 100_000
    densify_until_fraction: float = 0.5
    densify_interval: int = 500
    rebuild_ratio_start: int = 1
    rebuild_ratio_end: int = 100

    prune_density_floor: float = 1e-2
    prune_neighbor_floor: float = 1e-2

    quantile_weight: float = 0.01
    quantile_samples: int = 2
    quantile_weight_floor: float = 1e-4

    batch_rays: int = 65536
    epsilon: float = 1e-3
    step_limit: int = 4096
    grad_clip: float = 1e3
    holdout_interval: int = 500
    checkpoint_interval: int = 0          # 0: only at the end
    seed: int = 0
    workers: int = 0                      # 0: auto

    random_init_points: int = 2 ** 17
    random_init_std: float = 10.0

    # Ablation toggles
    sfm_init: bool = True
    densify: bool = True
    prune: bool = True
    quantile: bool = True

    def __post_init__(self):
        if not (0 < self.densify_until_fraction <= 1.0):
            raise ValueError("densify_until_fraction must be in (0, 1]")
        if self.freeze_tail_iters >= self.total_iters:
            raise ValueError("freeze tail must be shorter than training")
        for f in ("total_iters", "batch_rays", "max_points", "step_limit",
                  "densify_interval", "quantile_samples"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")


def load_config(path=None, **overrides):
    """TrainConfig from a TOML file plus keyword overrides."""
    values = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        known = {f.name for f in fields(TrainConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**values)


def _cosine(start, end, frac):
    return end + 0.5 * (1.0 + math.cos(math.pi * frac)) * (start - end)


def lr_schedule(iteration, config):
    """(lr_position, lr_density, lr_sh) at the given iteration.

    Density and SH anneal over the whole run to a tenth of their start value;
    positions anneal over the pre-freeze window and are then frozen (zero).
    """
    if not (0 <= iteration < config.total_iters):
        raise ValueError("iteration out of range")
    span = max(config.total_iters - 1, 1)
    frac = iteration / span
    lr_density = _cosine(
        config.lr_density_start, config.lr_density_start * config.lr_density_decay, frac
    )
    lr_sh = _cosine(config.lr_sh_start, config.lr_sh_start * config.lr_sh_decay, frac)

    pos_span = config.total_iters - config.freeze_tail_iters
    if iteration >= pos_span:
        lr_position = 0.0
    else:
        pfrac = iteration / max(pos_span - 1, 1)
        lr_position = _cosine(config.lr_position_start, config.lr_position_end, pfrac)
    return lr_position, lr_density, lr_sh
