"""The full reconstruction loop.

Each iteration samples a ray minibatch uniformly over all training pixels,
runs the fused walk/composite/backward kernel (L2 photometric adjoint plus
the depth-spread regularizer), clips gradients, and applies Adam with the
cosine schedules. Densification and pruning run on a fixed cadence during
the first part of training; the mesh is rebuilt on a ramping interval and
positions are frozen for the final tail.

Reproducibility: a single seeded generator drives all sampling, gradient
buffers are reduced in worker order, and the worker count is part of the
configuration, so identical (config, dataset, seed) runs produce identical
checkpoints.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from rfoam import foam as foam_mod
from rfoam._accel import default_workers, set_worker_threads
from rfoam.diffrender.render import render_image, scene_arrays
from rfoam.foam import FoamScene
from rfoam.geometry.delaunay import duplicate_tolerance
from rfoam.optim.adam import AdamState, adam_step
from rfoam.optim.config import lr_schedule
from rfoam.optim.losses import psnr, rgb_loss
from rfoam.optim.refine import densify, prune
from rfoam.tracer import kernels
from rfoam.tracer.rays import WIDTH_FLOOR_SCALE

METRIC_FIELDS = ("iter", "L_rgb", "L_quantile", "points", "psnr_holdout", "rays_per_sec")


@dataclass
class TrainResult:
    scene: FoamScene
    metrics: list
    final_psnr: float


def dedup_mask(points, extra_factor=1.0):
    """Keep-mask dropping points within duplicate tolerance (first wins)."""
    from scipy.spatial import cKDTree

    points = np.asarray(points, dtype=np.float64)
    drop = np.zeros(len(points), dtype=bool)
    tol = duplicate_tolerance(points) * extra_factor
    if tol <= 0 or len(points) < 2:
        return ~drop
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    pairs.sort(axis=1)
    for i, j in pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]:
        if not drop[i]:
            drop[j] = True
    return ~drop


def dedup_points(points, extra_factor=1.0):
    points = np.asarray(points, dtype=np.float64)
    keep = dedup_mask(points, extra_factor)
    return points[keep], int((~keep).sum())


def scene_from_sfm(points, colors=None, background=(0.0, 0.0, 0.0),
                   raw_density=0.0):
    """Initial scene from a sparse point cloud (deduplicated)."""
    pts = np.asarray(points, dtype=np.float64)
    keep = dedup_mask(pts)
    pts = pts[keep]
    scene = FoamScene.from_points(pts, raw_density=raw_density,
                                  background=background)
    if colors is not None and len(colors) == len(keep):
        from rfoam import sh

        scene.sh_coeffs[:, 0, :] = sh.color_to_dc(
            np.asarray(colors, dtype=np.float64)[keep]
        )
    return scene


def scene_random_init(config, rng, background=(0.0, 0.0, 0.0)):
    pts = rng.normal(0.0, config.random_init_std,
                     size=(config.random_init_points, 3))
    pts, _ = dedup_points(pts)
    return FoamScene.from_points(pts, raw_density=0.0, background=background)


def _rebuild_cap(config, iteration):
    frac = iteration / max(config.total_iters - 1, 1)
    cap = config.rebuild_ratio_start + frac * (
        config.rebuild_ratio_end - config.rebuild_ratio_start
    )
    return max(1, int(round(cap)))


def train(config, dataset, initial_scene, log=None, out_dir=None,
          start_iter=0, eval_cameras=None):
    """Run the loop; returns TrainResult. ``initial_scene`` is mutated."""
    rng = np.random.default_rng(config.seed)
    scene = initial_scene
    n_workers = set_worker_threads(config.workers or default_workers())

    train_cams = dataset.train_cameras
    train_imgs = dataset.train_images
    n_img = len(train_cams)
    height, width = train_imgs[0].shape[:2]
    pix_per_img = height * width
    all_dirs = np.stack([cam.ray_directions() for cam in train_cams])
    all_targets = np.stack([img.reshape(-1, 3) for img in train_imgs])
    cam_origins = np.stack([cam.position for cam in train_cams])

    scene.rebuild()
    start_count = scene.n_sites
    adam_pos = AdamState(scene.positions.shape)
    adam_den = AdamState(scene.raw_density.shape)
    adam_sh = AdamState(scene.sh_coeffs.shape)

    accum_grad_norm = np.zeros(scene.n_sites)
    accum_iters = 0
    steps_since_rebuild = 0
    rebuild_interval = config.rebuild_ratio_start
    densify_end = int(config.densify_until_fraction * config.total_iters)
    warmup_end = int(config.sh_warmup_fraction * config.total_iters)
    freeze_start = config.total_iters - config.freeze_tail_iters

    metrics = []
    last_psnr = float("nan")
    m = config.batch_rays
    for it in range(start_iter, config.total_iters):
        t_iter = time.perf_counter()
        lr_pos, lr_den, lr_sh = lr_schedule(it, config)

        flat = rng.integers(0, n_img * pix_per_img, size=m)
        img_idx = flat // pix_per_img
        pix_idx = flat % pix_per_img
        origins = np.ascontiguousarray(cam_origins[img_idx])
        directions = np.ascontiguousarray(all_dirs[img_idx, pix_idx])
        targets = np.ascontiguousarray(all_targets[img_idx, pix_idx])
        u_pairs = rng.random((m, config.quantile_samples, 2))

        adj, sigma, sh_flat = scene_arrays(scene)
        cam_sites = np.array(
            [adj.nearest_site(o) for o in cam_origins], dtype=np.int64
        )
        start_sites = cam_sites[img_idx]
        center = 0.5 * (adj.bbox_lo + adj.bbox_hi)
        t_far = float(
            np.linalg.norm(cam_origins - center, axis=1).max()
            + 2.0 * adj.diagonal + 1.0
        )
        t_min = np.zeros(m)
        t_max = np.full(m, t_far)

        n = scene.n_sites
        out_rgb = np.empty((m, 3))
        out_status = np.empty(m, dtype=np.int8)
        d_sigma_w = np.zeros((n_workers, n))
        d_sh_w = np.zeros((n_workers, n, 48))
        d_pos_w = np.zeros((n_workers, n, 3))
        loss_w = np.zeros((n_workers, 2))
        counters = np.zeros((n_workers, 2), dtype=np.int64)
        scratch_cells = np.empty((n_workers, config.step_limit), dtype=np.int64)
        scratch_t0 = np.empty((n_workers, config.step_limit))
        scratch_t1 = np.empty((n_workers, config.step_limit))

        rgb_scale = 1.0 / (3.0 * m)
        q_scale = (
            config.quantile_weight / (m * config.quantile_samples)
            if config.quantile and config.quantile_weight > 0
            else 0.0
        )
        kernels.train_batch(
            adj.positions, adj.offsets, adj.neighbors, sigma, sh_flat,
            scene.background,
            origins, directions, t_min, t_max, start_sites, targets,
            config.epsilon, config.step_limit,
            WIDTH_FLOOR_SCALE * adj.diagonal,
            rgb_scale,
            q_scale, u_pairs, config.quantile_weight_floor,
            n_workers,
            out_rgb, out_status,
            d_sigma_w, d_sh_w, d_pos_w,
            loss_w,
            counters,
            scratch_cells, scratch_t0, scratch_t1,
        )
        d_sigma = d_sigma_w.sum(axis=0)
        d_sh = d_sh_w.sum(axis=0).reshape(n, 16, 3)
        d_pos = d_pos_w.sum(axis=0)
        loss_rgb = float(loss_w[:, 0].sum()) / (3.0 * m)
        loss_q = float(loss_w[:, 1].sum()) / (m * config.quantile_samples)

        d_raw = d_sigma * foam_mod.softplus_grad(scene.raw_density)
        if it < warmup_end:
            d_sh[:, 1:, :] = 0.0
        clip = config.grad_clip
        np.clip(d_raw, -clip, clip, out=d_raw)
        np.clip(d_sh, -clip, clip, out=d_sh)
        np.clip(d_pos, -clip, clip, out=d_pos)

        accum_grad_norm += np.linalg.norm(d_pos, axis=1)
        accum_iters += 1

        if lr_pos > 0.0:
            adam_step(scene.positions, d_pos, adam_pos, lr_pos)
        adam_step(scene.raw_density, d_raw, adam_den, lr_den)
        adam_step(scene.sh_coeffs, d_sh, adam_sh, lr_sh)
        steps_since_rebuild += 1

        structural = False
        if (
            config.densify
            and it < densify_end
            and (it + 1) % config.densify_interval == 0
        ):
            if config.prune:
                removed, keep = prune(
                    scene, config.prune_density_floor, config.prune_neighbor_floor
                )
                if removed:
                    adam_pos.m = adam_pos.m[keep]
                    adam_pos.v = adam_pos.v[keep]
                    adam_den.m = adam_den.m[keep]
                    adam_den.v = adam_den.v[keep]
                    adam_sh.m = adam_sh.m[keep]
                    adam_sh.v = adam_sh.v[keep]
                    accum_grad_norm = accum_grad_norm[keep]
                    structural = True
                    scene.rebuild()
            n0 = scene.n_sites
            target = _growth_target(config, it, start_count)
            want = target - n0
            if want > 0:
                avg_norm = accum_grad_norm / max(accum_iters, 1)
                added = densify(scene, avg_norm, rng, want, config.max_points)
                if added:
                    structural = True
                    for state in (adam_pos, adam_den, adam_sh):
                        pad = [(0, added)] + [(0, 0)] * (state.m.ndim - 1)
                        state.m = np.pad(state.m, pad)
                        state.v = np.pad(state.v, pad)
            accum_grad_norm = np.zeros(scene.n_sites)
            accum_iters = 0

        if structural:
            scene.rebuild()
            steps_since_rebuild = 0
            rebuild_interval = config.rebuild_ratio_start
        elif it < freeze_start and (
            steps_since_rebuild >= rebuild_interval or it == freeze_start - 1
        ):
            scene.rebuild()
            steps_since_rebuild = 0
            rebuild_interval = min(rebuild_interval * 2, _rebuild_cap(config, it))

        iter_secs = time.perf_counter() - t_iter
        row = {
            "iter": it,
            "L_rgb": loss_rgb,
            "L_quantile": loss_q,
            "points": scene.n_sites,
            "psnr_holdout": np.nan,
            "rays_per_sec": m / iter_secs,
        }
        do_eval = (
            (it + 1) % config.holdout_interval == 0
            or it == config.total_iters - 1
        )
        if do_eval and dataset.holdout_images:
            last_psnr = evaluate_holdout(scene, dataset, config)
            row["psnr_holdout"] = last_psnr
        metrics.append(row)
        if log is not None and (do_eval or (it + 1) % 100 == 0 or it == 0):
            log(
                f"iter {it + 1}/{config.total_iters} "
                f"L_rgb {loss_rgb:.5f} L_q {loss_q:.4f} "
                f"points {scene.n_sites} psnr {row['psnr_holdout']:.2f} "
                f"rays/s {row['rays_per_sec']:,.0f}"
            )
        if (
            out_dir is not None
            and config.checkpoint_interval
            and (it + 1) % config.checkpoint_interval == 0
        ):
            from rfoam.io.checkpoint import save_checkpoint

            save_checkpoint(scene, f"{out_dir}/checkpoint_{it + 1:06d}.rfoam")

    return TrainResult(scene, metrics, last_psnr)


def _growth_target(config, iteration, start_count):
    densify_end = config.densify_until_fraction * config.total_iters
    frac = min(iteration / densify_end, 1.0)
    target = start_count + (config.max_points - start_count) * frac
    return int(round(min(target, config.max_points)))


def evaluate_holdout(scene, dataset, config):
    values = []
    for cam, target in zip(dataset.holdout_cameras, dataset.holdout_images):
        img = render_image(scene, cam, epsilon=config.epsilon,
                           step_limit=config.step_limit,
                           workers=config.workers or None)
        values.append(psnr(np.clip(img, 0.0, 1.0), target))
    return float(np.mean(values))


def write_metrics_csv(metrics, path):
    with open(path, "w") as fh:
        fh.write(",".join(METRIC_FIELDS) + "\n")
        for row in metrics:
            fh.write(
                f"{row['iter']},{row['L_rgb']:.8g},{row['L_quantile']:.8g},"
                f"{row['points']},{row['psnr_holdout']:.6g},"
                f"{row['rays_per_sec']:.6g}\n"
            )
