"""Training loss (L1 + D-SSIM) with its analytic adjoint, and image metrics.

The loss sees raw rendered values; images are clamped to [0, 1] only when
computing report metrics or writing PNGs, never inside the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DimensionMismatchError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
PSNR_CAP_DB = 99.0


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


_WINDOW = _gaussian_window()


def _blur(img):
    """Separable windowed mean with zero padding, per channel."""
    out = correlate1d(img, _WINDOW, axis=0, mode="constant")
    return correlate1d(out, _WINDOW, axis=1, mode="constant")


def _check_pair(a, b):
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")


def _ssim_terms(x, y):
    mu_x = _blur(x)
    mu_y = _blur(y)
    var_x = _blur(x * x) - mu_x * mu_x
    var_y = _blur(y * y) - mu_y * mu_y
    cov = _blur(x * y) - mu_x * mu_y
    a1 = 2.0 * mu_x * mu_y + SSIM_C1
    a2 = 2.0 * cov + SSIM_C2
    b1 = mu_x * mu_x + mu_y * mu_y + SSIM_C1
    b2 = var_x + var_y + SSIM_C2
    return mu_x, mu_y, a1, a2, b1, b2


def ssim(x, y) -> float:
    """Mean SSIM over pixels and channels, 11x11 Gaussian window."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_pair(x, y)
    _, _, a1, a2, b1, b2 = _ssim_terms(x, y)
    return float(np.mean(a1 * a2 / (b1 * b2)))


def _ssim_mean_grad(x, y):
    """d(mean SSIM)/dx, chained through the windowed moments."""
    mu_x, mu_y, a1, a2, b1, b2 = _ssim_terms(x, y)
    denom = b1 * b2
    f = a1 * a2 / denom
    df_dmu_x = 2.0 * mu_y * a2 / denom - 2.0 * mu_x * f / b1
    df_dvar_x = -f / b2
    df_dcov = 2.0 * a1 / denom
    grad = _blur(df_dmu_x) \
        + 2.0 * x * _blur(df_dvar_x) - 2.0 * _blur(mu_x * df_dvar_x) \
        + y * _blur(df_dcov) - _blur(mu_y * df_dcov)
    return grad / x.size


def loss(render, gt, lambda_dssim=0.2):
    """(1 - lambda) * L1 + lambda * (1 - SSIM); returns (value, dloss/drender)."""
    render = np.asarray(render, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_pair(render, gt)
    diff = render - gt
    l1 = float(np.mean(np.abs(diff)))
    adjoint = (1.0 - lambda_dssim) * np.sign(diff) / diff.size
    value = (1.0 - lambda_dssim) * l1
    if lambda_dssim > 0.0:
        value += lambda_dssim * (1.0 - ssim(render, gt))
        adjoint = adjoint - lambda_dssim * _ssim_mean_grad(render, gt)
    return value, adjoint


def l1_value(render, gt) -> float:
    render = np.asarray(render, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_pair(render, gt)
    return float(np.mean(np.abs(render - gt)))


def psnr(render, gt, peak=1.0) -> float:
    """PSNR in dB on clamped images; identical pairs report the 99 dB cap."""
    render = np.clip(np.asarray(render, dtype=np.float64), 0.0, 1.0)
    gt = np.clip(np.asarray(gt, dtype=np.float64), 0.0, 1.0)
    _check_pair(render, gt)
    mse = float(np.mean((render - gt) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(peak * peak / mse)))


@dataclass
class MetricsReport:
    psnr_db: float
    ssim: float
    mean_l1: float
    n_primitives: int
    n_dog: int
    wall_time_s: float = 0.0

    def lines(self):
        return [
            f"psnr_db: {self.psnr_db:.4f}",
            f"ssim: {self.ssim:.6f}",
            f"mean_l1: {self.mean_l1:.6g}",
            f"n_primitives: {self.n_primitives}",
            f"n_dog: {self.n_dog}",
            f"wall_time_s: {self.wall_time_s:.3f}",
        ]

    def __str__(self):
        return "\n".join(self.lines())
