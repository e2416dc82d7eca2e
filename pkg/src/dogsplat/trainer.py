"""Training orchestration and the synthetic verification harness.

Ground truth here is itself a Gaussian scene (or an analytic target), which
makes fitting and pruning quality measurable at desk scale: a run starts
from an over-complete random initialization, optimizes, prunes down to the
target count under the scheduler, then optionally activates the
difference-of-Gaussians extension and refines.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logit

from .camera import Camera, ring_cameras
from .config import TrainConfig
from .dog_control import activate_dog, degrade_step
from .errors import AllZeroScoresError, EmptyDatasetError
from .io_formats import CurveRow
from .losses import MetricsReport, l1_value, loss, psnr, ssim
from .optim import SceneOptimizer
from .pruning import accumulate_scores, combine_sps, rank_and_prune
from .rasterizer import backward, render_naive, render_with_capture
from .scene import SH_DC_OFFSET, SceneModel, sh_coeff_count
from .scheduler import Phase, SchedulerState
from .spectral import next_pow2, radial_weights


@dataclass
class ViewData:
    camera: Camera
    image: np.ndarray
    name: str = ""


@dataclass
class TrainEvent:
    iteration: int
    kind: str
    ratio: float = 0.0
    n_before: int = 0
    n_after: int = 0


@dataclass
class TrainResult:
    scene: SceneModel
    rows: list[CurveRow]
    events: list[TrainEvent]
    wall_time_s: float


def _background(config):
    return np.full(3, config.background)


def render_dataset(scene, cameras, background=None):
    return [render_naive(scene, cam, background).image for cam in cameras]


def make_synthetic_scene(seed, n_gaussians=100, views=8, resolution=64,
                         ring_phase=0.0):
    """Random ground-truth scene plus its rendered ring of views.

    Deterministic per seed: primitives live inside the unit cube with scales
    in [0.02, 0.15], opacities in [0.4, 0.95] and flat (degree-0) colors.
    """
    rng = np.random.default_rng(seed)
    n = n_gaussians
    positions = rng.uniform(-0.4, 0.4, size=(n, 3))
    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    log_scales = np.log(rng.uniform(0.02, 0.15, size=(n, 3)))
    opacity_logit = logit(rng.uniform(0.4, 0.95, size=n))
    colors = rng.uniform(0.1, 0.9, size=(n, 3))
    coeffs = ((colors - SH_DC_OFFSET) / 0.28209479177387814)[:, :, None]
    scene = SceneModel(positions, quats, log_scales, opacity_logit, coeffs,
                       sh_degree=0)
    cameras = ring_cameras(views, resolution, resolution, phase=ring_phase)
    dataset = [ViewData(cam, render_naive(scene, cam).image, f"view_{i:03d}.png")
               for i, cam in enumerate(cameras)]
    return scene, dataset


def make_edge_dataset(views=6, resolution=64, tone_low=0.15, tone_high=0.85):
    """Two-tone plane target: a square at z=0 split into two gray levels.

    Views are ray-traced analytically, so the tone boundary and the square
    silhouette stay pixel-sharp; Gaussian mixtures can only approximate them.
    """
    cameras = ring_cameras(views, resolution, resolution, radius=1.6, z=1.7,
                           fov_deg=40.0)
    dataset = []
    for i, cam in enumerate(cameras):
        img = np.zeros((resolution, resolution, 3))
        origin = cam.center
        us = (np.arange(resolution) + 0.5 - cam.cx) / cam.fx
        vs = (np.arange(resolution) + 0.5 - cam.cy) / cam.fy
        dirs_cam = np.stack([np.broadcast_to(us[None, :], (resolution, resolution)),
                             np.broadcast_to(vs[:, None], (resolution, resolution)),
                             np.ones((resolution, resolution))], axis=-1)
        dirs = dirs_cam @ cam.rotation  # rows transform by R^T
        dz = dirs[..., 2]
        tt = np.where(np.abs(dz) > 1e-12, -origin[2] / dz, -1.0)
        px = origin[0] + tt * dirs[..., 0]
        py = origin[1] + tt * dirs[..., 1]
        hit = (tt > 0) & (np.abs(px) <= 0.5) & (np.abs(py) <= 0.5)
        tone = np.where(px < 0.0, tone_low, tone_high)
        img[hit] = tone[hit, None]
        dataset.append(ViewData(cam, img, f"view_{i:03d}.png"))
    return dataset


def init_scene(config: TrainConfig, rng: np.random.Generator) -> SceneModel:
    """Over-complete random initialization standing in for a densified model."""
    n = config.n_init
    positions = rng.uniform(-0.45, 0.45, size=(n, 3))
    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    log_scales = np.log(rng.uniform(0.03, 0.12, size=(n, 3)))
    opacity_logit = np.full(n, logit(0.25))
    k = sh_coeff_count(config.sh_degree)
    coeffs = np.zeros((n, 3, k))
    coeffs[:, :, 0] = rng.uniform(-0.6, 0.6, size=(n, 3))
    return SceneModel(positions, quats, log_scales, opacity_logit, coeffs,
                      sh_degree=config.sh_degree, f_s_max=config.f_s_max)


def full_train_l1(scene, dataset, background=None, executor=None) -> float:
    """Mean over views of the mean per-pixel L1 on raw renders."""
    if not dataset:
        raise EmptyDatasetError("dataset has no views")

    def one(view):
        return l1_value(render_naive(scene, view.camera, background).image,
                        view.image)

    if executor is None:
        vals = [one(v) for v in dataset]
    else:
        vals = list(executor.map(one, dataset))
    return float(np.mean(vals))


def evaluate(scene, cameras, gt_images, background=None) -> MetricsReport:
    """Clamped-image metrics averaged over views."""
    if len(cameras) != len(gt_images):
        raise EmptyDatasetError("camera/image count mismatch")
    if not cameras:
        raise EmptyDatasetError("nothing to evaluate")
    start = time.perf_counter()
    psnrs, ssims, l1s = [], [], []
    for cam, gt in zip(cameras, gt_images):
        img = np.clip(render_naive(scene, cam, background).image, 0.0, 1.0)
        gtc = np.clip(np.asarray(gt, dtype=np.float64), 0.0, 1.0)
        psnrs.append(psnr(img, gtc))
        ssims.append(ssim(img, gtc))
        l1s.append(l1_value(img, gtc))
    return MetricsReport(float(np.mean(psnrs)), float(np.mean(ssims)),
                         float(np.mean(l1s)), scene.count, scene.dog_count,
                         time.perf_counter() - start)


def fit_iterations(scene, dataset, optimizer, iterations, config,
                   rng=None, start_iter=0, rows=None):
    """Plain optimization loop shared by train() and the experiment harness."""
    bg = _background(config)
    order = np.arange(len(dataset))
    rng = rng or np.random.default_rng(0)
    tiled = config.rasterizer == "tiled"
    for k in range(iterations):
        if k % len(dataset) == 0:
            order = rng.permutation(len(dataset))
        view = dataset[order[k % len(dataset)]]
        res, capture = render_with_capture(scene, view.camera, bg, tiled=tiled)
        _, adjoint = loss(res.image, view.image, config.lambda_dssim)
        grads = backward(scene, view.camera, adjoint, bg, capture=capture)
        optimizer.step(scene, grads)
        if rows is not None:
            rows.append(CurveRow(start_iter + k + 1, scene.count, scene.dog_count,
                                 l1_value(res.image, view.image),
                                 psnr(res.image, view.image)))
    return scene


def _prune_ranking(scene, dataset, config, grid, executor):
    """Combined importance (or its fallbacks) for the current scene."""
    if not config.use_sps:
        return scene.opacities()
    cams = [v.camera for v in dataset]
    scores = accumulate_scores(scene, cams, grid,
                               background=_background(config),
                               include_position=config.score_include_position,
                               executor=executor)
    try:
        return combine_sps(scores, config.lambda_s, config.lambda_f)
    except AllZeroScoresError:
        return scene.opacities()


def train(config: TrainConfig, dataset, log=None, threads=1) -> TrainResult:
    """Run the full pipeline; returns the final scene plus the curve log rows.

    `log` is an optional CurveLog mirror of the returned rows; `threads`
    only fans out per-view evaluation and scoring (results are merged in
    view order, so totals do not depend on the thread count).
    """
    if not dataset:
        raise EmptyDatasetError("dataset has no views")
    config.validate()
    start_time = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    scene = init_scene(config, rng)
    bg = _background(config)
    tiled = config.rasterizer == "tiled"

    optimizer = SceneOptimizer(
        scene, lr_position=config.lr_position,
        lr_position_final=config.lr_position_final,
        lr_rotation=config.lr_rotation, lr_scale=config.lr_scale,
        lr_opacity=config.lr_opacity, lr_color=config.lr_color,
        lr_dog=config.lr_dog, total_steps=config.total_iters)

    sched = SchedulerState(
        n_target=config.resolve_n_target(scene.count),
        prune_start_iter=config.prune_start_iter,
        total_iters=config.total_iters,
        check_period=config.check_period,
        iter_max=config.iter_max,
        beta=config.beta,
        phase_cap=config.prune_phase_cap,
        min_prune_count=None if config.min_prune_count < 0 else config.min_prune_count,
        uniform_rounds=None if config.use_dpra else config.uniform_rounds)
    sched.n_current = scene.count

    h = dataset[0].image.shape[0]
    w = dataset[0].image.shape[1]
    grid = radial_weights(next_pow2(h), next_pow2(w), config.gamma_f) \
        if config.use_sps else None

    executor = ThreadPoolExecutor(threads) if threads > 1 else None
    rows: list[CurveRow] = []
    events: list[TrainEvent] = []
    recovery_check_iter = None
    order = np.arange(len(dataset))

    def emit(row):
        rows.append(row)
        if log is not None:
            log.append(row)

    try:
        for it in range(1, config.total_iters + 1):
            if (it - 1) % len(dataset) == 0:
                order = rng.permutation(len(dataset))
            view = dataset[order[(it - 1) % len(dataset)]]
            res, capture = render_with_capture(scene, view.camera, bg, tiled=tiled)
            _, adjoint = loss(res.image, view.image, config.lambda_dssim)
            grads = backward(scene, view.camera, adjoint, bg, capture=capture)
            optimizer.step(scene, grads)

            event = "none"
            l1_log = l1_value(res.image, view.image)
            psnr_log = psnr(res.image, view.image)

            action = sched.step(it)
            if action.kind == "evaluate_l1":
                full = full_train_l1(scene, dataset, bg, executor)
                l1_log, event = full, "eval"
                events.append(TrainEvent(it, "eval", n_before=scene.count,
                                         n_after=scene.count))
                action = sched.step(it, l1_full=full)

            if action.kind == "prune":
                ranking = _prune_ranking(scene, dataset, config, grid, executor)
                n_before = scene.count
                _, keep = rank_and_prune(scene, ranking, action.ratio)
                optimizer.compact(keep)
                sched.record_prune(scene.count)
                events.append(TrainEvent(it, "prune", action.ratio,
                                         n_before, scene.count))
                event = "prune"
            elif action.kind == "activate_dog":
                if config.use_dog:
                    activate_dog(scene, config.dog_f_init, config.dog_falpha_init)
                    event = "activate_dog"
                    l1_log = full_train_l1(scene, dataset, bg, executor)
                    recovery_check_iter = it + config.dog_recover_iters
                    events.append(TrainEvent(it, "activate_dog",
                                             n_before=scene.count,
                                             n_after=scene.count))
            elif action.kind == "finish":
                event = "finish"
                l1_log = full_train_l1(scene, dataset, bg, executor)
                events.append(TrainEvent(it, "finish", n_before=scene.count,
                                         n_after=scene.count))

            if sched.phase is Phase.DOG_REFINE and config.use_dog:
                degraded = degrade_step(scene, config.degrade_threshold,
                                        config.degrade_rule)
                if degraded and event == "none":
                    event = "degrade"
            if recovery_check_iter == it:
                l1_log = full_train_l1(scene, dataset, bg, executor)
                if event == "none":
                    event = "eval"
                events.append(TrainEvent(it, "eval", n_before=scene.count,
                                         n_after=scene.count))

            emit(CurveRow(it, scene.count, scene.dog_count, l1_log, psnr_log, event))
            if action.kind == "finish":
                break
    finally:
        if executor is not None:
            executor.shutdown()

    return TrainResult(scene, rows, events, time.perf_counter() - start_time)
