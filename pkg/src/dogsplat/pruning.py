"""Importance scoring and rank-and-remove compaction.

The combined score mixes the L2-normalized spatial and spectral score
vectors; pruning removes the lowest-scoring primitives with storage index as
tie-break, which makes removal sets reproducible across runs and thread
counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroScoresError, RatioOutOfRangeError
from .rasterizer import backward, render_with_capture
from .spectral import FrequencyWeightGrid, filtered_score_from_fields


@dataclass
class ScoreVector:
    """Per-primitive importance accumulated over a set of training views."""

    spatial: np.ndarray
    spectral: np.ndarray
    combined: np.ndarray | None = None
    views_accumulated: int = 0


def accumulate_scores(scene, views, grid: FrequencyWeightGrid | None = None,
                      background=None, include_position=False,
                      executor=None) -> ScoreVector:
    """Sum spatial (and optionally spectral) scores over all training views.

    `views` is a sequence of cameras; the scene is treated as frozen. The
    spectral term is skipped when `grid` is None. Per-view work may fan out
    to `executor`; results are merged in view order so the totals are
    independent of thread count.
    """
    n = scene.count
    spatial = np.zeros(n)
    spectral = np.zeros(n)

    def one_view(camera):
        _, capture = render_with_capture(scene, camera, background)
        ones = np.ones((camera.height, camera.width, 3))
        grads = backward(scene, camera, ones, background, capture=capture,
                         want_fields=grid is not None,
                         include_position_in_spatial=include_position)
        spec = None
        if grid is not None:
            spec = filtered_score_from_fields(grads.opacity_grad_fields, grid)
        return grads.spatial_sq_grad, spec

    if executor is None:
        results = [one_view(c) for c in views]
    else:
        results = list(executor.map(one_view, views))
    count = 0
    for spa, spe in results:
        spatial += spa
        if spe is not None:
            spectral += spe
        count += 1
    return ScoreVector(spatial, spectral, None, count)


def combine_sps(scores: ScoreVector, lambda_spatial=0.5, lambda_spectral=0.5) -> np.ndarray:
    """Combined score: each term L2-normalized then weighted.

    A term whose vector has zero norm contributes nothing; if both are zero
    AllZeroScoresError signals the caller to fall back to opacity ranking.
    """
    ns = float(np.linalg.norm(scores.spatial))
    nf = float(np.linalg.norm(scores.spectral))
    if ns == 0.0 and nf == 0.0:
        raise AllZeroScoresError("both score vectors are identically zero")
    combined = np.zeros_like(scores.spatial)
    if ns > 0.0:
        combined += lambda_spatial * scores.spatial / ns
    if nf > 0.0:
        combined += lambda_spectral * scores.spectral / nf
    scores.combined = combined
    return combined


def prune_count(ratio: float, n: int) -> int:
    if not 0.0 < ratio < 1.0:
        raise RatioOutOfRangeError(f"ratio must be in (0, 1), got {ratio}")
    # ceil with a guard so ratios meant to remove an exact count are not
    # bumped up by float noise.
    return int(math.ceil(ratio * n - 1e-9))


def select_prune_indices(scores: np.ndarray, ratio: float) -> np.ndarray:
    """Indices of the ceil(ratio * N) lowest scores, lower index first on ties."""
    n = len(scores)
    k = prune_count(ratio, n)
    order = np.lexsort((np.arange(n), scores))
    return np.sort(order[:k])


def rank_and_prune(scene, combined: np.ndarray, ratio: float):
    """Remove the lowest-score primitives in place.

    Returns (removed_indices, keep_mask); the caller compacts any aligned
    per-primitive state (optimizer moments) with the same mask.
    """
    removed = select_prune_indices(np.asarray(combined, dtype=np.float64), ratio)
    keep = np.ones(scene.count, dtype=bool)
    keep[removed] = False
    scene.compact(keep)
    return removed, keep


def opacity_rank_prune(scene, ratio: float):
    """Baseline: prune by activated opacity instead of the combined score."""
    return rank_and_prune(scene, scene.opacities(), ratio)
