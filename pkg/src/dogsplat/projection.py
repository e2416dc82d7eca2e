"""EWA projection of 3D Gaussians to screen-space splats.

The perspective projection is linearized at each primitive center with the
standard 2x3 Jacobian, so a world covariance maps to a 2x2 screen covariance.
A small isotropic dilation is added to both the primary and the pseudo
covariance; applying it to only one branch would distort the
difference-of-Gaussians profile at small scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonInvertibleError
from .scene import (SceneModel, build_covariance, build_pseudo_covariance,
                    eval_color, quat_to_rotmat)

# Screen-space covariance dilation in px^2 (backbone anti-aliasing constant).
COV2D_DILATION = 0.3

# Splats contribute nothing beyond three standard deviations.
RADIUS_SIGMA = 3.0

_MIN_DET = 1e-12


@dataclass
class Splat2D:
    """A projected primitive."""

    mean2d: np.ndarray            # (2,) pixel coordinates
    cov2d: np.ndarray             # (2, 2) symmetric, after dilation
    depth: float                  # camera-space z
    radius: int                   # pixels, ceil(3 * sqrt(max eigenvalue))
    pseudo_cov2d: np.ndarray | None = None  # only for active DoG primitives


def perspective_jacobian(t, fx, fy):
    """2x3 Jacobian of the pinhole projection at camera-space point t."""
    tx, ty, tz = t
    return np.array([
        [fx / tz, 0.0, -fx * tx / (tz * tz)],
        [0.0, fy / tz, -fy * ty / (tz * tz)],
    ])


def invert_cov(cov2d):
    """Conic (a, b, c) with [[a, b], [b, c]] = cov2d^-1, plus det(cov2d).

    Raises NonInvertibleError when the determinant is not safely positive;
    the caller is expected to cull such splats.
    """
    a, b, c = cov2d[0, 0], cov2d[0, 1], cov2d[1, 1]
    det = a * c - b * b
    if det <= _MIN_DET:
        raise NonInvertibleError(f"degenerate 2x2 covariance, det={det!r}")
    return (c / det, -b / det, a / det), det


def _max_eig_2x2(a, b, c):
    half_tr = 0.5 * (a + c)
    return half_tr + np.sqrt(np.maximum((0.5 * (a - c)) ** 2 + b * b, 0.0))


def project(camera, position, rotation, log_scales, dog_factors=None):
    """Project one primitive; returns a Splat2D or None when culled.

    Culling is conservative: behind the near plane, or the radius-expanded
    axis-aligned bounding box misses the image rectangle.
    """
    t = camera.rotation @ np.asarray(position, dtype=np.float64) + camera.translation
    if t[2] <= camera.near:
        return None
    cov3d = build_covariance(rotation, log_scales)
    j = perspective_jacobian(t, camera.fx, camera.fy)
    p = j @ camera.rotation
    cov2d = p @ cov3d @ p.T + COV2D_DILATION * np.eye(2)
    radius = int(np.ceil(RADIUS_SIGMA * np.sqrt(
        _max_eig_2x2(cov2d[0, 0], cov2d[0, 1], cov2d[1, 1]))))
    mean2d = np.array([camera.fx * t[0] / t[2] + camera.cx,
                       camera.fy * t[1] / t[2] + camera.cy])
    if (mean2d[0] + radius < 0 or mean2d[0] - radius > camera.width
            or mean2d[1] + radius < 0 or mean2d[1] - radius > camera.height):
        return None
    pseudo = None
    if dog_factors is not None:
        pcov3d = build_pseudo_covariance(rotation, log_scales, dog_factors)
        pseudo = p @ pcov3d @ p.T + COV2D_DILATION * np.eye(2)
    return Splat2D(mean2d, cov2d, float(t[2]), radius, pseudo)


class ProjectedScene:
    """Vectorized projection of every primitive in a scene for one camera.

    Splats are depth-sorted front to back with storage index as tie-break, so
    the blend order is canonical under permutations of storage order. All
    arrays are indexed by sorted order.
    """

    __slots__ = ("order", "mean2d", "depth", "radius", "conic", "pseudo_conic",
                 "alpha", "pseudo_alpha", "colors", "rot_mats", "scales",
                 "factors", "t_cam", "is_dog", "n_drawn")

    def __init__(self, scene: SceneModel, camera):
        pos = scene.positions
        t = pos @ camera.rotation.T + camera.translation
        visible = t[:, 2] > camera.near

        rot_mats = np.zeros((scene.count, 3, 3))
        scales = scene.scales()
        factors = scene.dog_scale_factors()
        alpha = scene.opacities()
        pseudo_alpha = scene.pseudo_opacities()
        is_dog = scene.dog_active.copy()
        rot_mats[visible] = quat_to_rotmat(scene.rotations[visible])

        # Screen covariance of the visible set, batched.
        n = scene.count
        mean2d = np.zeros((n, 2))
        conic = np.zeros((n, 3))
        pseudo_conic = np.zeros((n, 3))
        radius = np.zeros(n)
        colors = np.zeros((n, 3))
        if visible.any():
            idx = np.flatnonzero(visible)
            tv = t[idx]
            m = rot_mats[idx] * scales[idx][:, None, :]
            cov3d = m @ np.swapaxes(m, 1, 2)
            jw = np.zeros((len(idx), 2, 3))
            tz = tv[:, 2]
            jw[:, 0, 0] = camera.fx / tz
            jw[:, 0, 2] = -camera.fx * tv[:, 0] / (tz * tz)
            jw[:, 1, 1] = camera.fy / tz
            jw[:, 1, 2] = -camera.fy * tv[:, 1] / (tz * tz)
            p = jw @ camera.rotation
            cov2d = p @ cov3d @ np.swapaxes(p, 1, 2)
            a = cov2d[:, 0, 0] + COV2D_DILATION
            b = cov2d[:, 0, 1]
            c = cov2d[:, 1, 1] + COV2D_DILATION
            det = a * c - b * b
            ok = det > _MIN_DET
            conic[idx[ok]] = np.stack(
                [c[ok] / det[ok], -b[ok] / det[ok], a[ok] / det[ok]], axis=1)
            radius[idx] = np.ceil(RADIUS_SIGMA * np.sqrt(_max_eig_2x2(a, b, c)))
            mean2d[idx, 0] = camera.fx * tv[:, 0] / tz + camera.cx
            mean2d[idx, 1] = camera.fy * tv[:, 1] / tz + camera.cy
            visible[idx[~ok]] = False

            dog_idx = np.flatnonzero(visible & is_dog)
            if len(dog_idx):
                sel = np.searchsorted(idx, dog_idx)
                mp = rot_mats[dog_idx] * (scales[dog_idx] * factors[dog_idx])[:, None, :]
                pcov3d = mp @ np.swapaxes(mp, 1, 2)
                pcov2d = p[sel] @ pcov3d @ np.swapaxes(p[sel], 1, 2)
                pa = pcov2d[:, 0, 0] + COV2D_DILATION
                pb = pcov2d[:, 0, 1]
                pc = pcov2d[:, 1, 1] + COV2D_DILATION
                pdet = pa * pc - pb * pb
                pok = pdet > _MIN_DET
                pseudo_conic[dog_idx[pok]] = np.stack(
                    [pc[pok] / pdet[pok], -pb[pok] / pdet[pok], pa[pok] / pdet[pok]],
                    axis=1)
                # A degenerate pseudo branch falls back to the plain path.
                is_dog[dog_idx[~pok]] = False

            # Bounding-box cull against the image rectangle.
            off = (mean2d[idx, 0] + radius[idx] < 0) \
                | (mean2d[idx, 0] - radius[idx] > camera.width) \
                | (mean2d[idx, 1] + radius[idx] < 0) \
                | (mean2d[idx, 1] - radius[idx] > camera.height)
            visible[idx[off]] = False

            drawn = np.flatnonzero(visible)
            if len(drawn):
                view_dir = pos[drawn] - camera.center
                view_dir = view_dir / np.linalg.norm(view_dir, axis=1, keepdims=True)
                colors[drawn] = eval_color(
                    scene.color_coeffs[drawn], view_dir, scene.sh_degree)

        drawn = np.flatnonzero(visible)
        # Front-to-back, storage index breaks depth ties.
        order = drawn[np.lexsort((drawn, t[drawn, 2]))]
        self.order = order
        self.n_drawn = len(order)
        self.mean2d = mean2d
        self.depth = t[:, 2]
        self.radius = radius.astype(np.int64)
        self.conic = conic
        self.pseudo_conic = pseudo_conic
        self.alpha = alpha
        self.pseudo_alpha = pseudo_alpha
        self.colors = colors
        self.rot_mats = rot_mats
        self.scales = scales
        self.factors = factors
        self.t_cam = t
        self.is_dog = is_dog
