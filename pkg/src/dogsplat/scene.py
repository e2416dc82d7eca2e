"""Scene model: a structure-of-arrays population of Gaussian primitives.

Latents are stored unconstrained (logits for opacities and pseudo factors,
logs for scales) so the physical constraints hold by construction. Pruning
is an index compaction over every array.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, logit

# Real spherical harmonics constants, degrees 0..2 (3DGS convention).
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)

# DC channel offset used by 3DGS checkpoints: rgb = SH_C0 * dc + 0.5.
SH_DC_OFFSET = 0.5


def sh_coeff_count(degree: int) -> int:
    return (degree + 1) ** 2


class SceneModel:
    """Parallel arrays of primitive latents plus the pseudo-Gaussian extension.

    Arrays (length N unless noted):
      positions      (N, 3) world-space centers
      rotations      (N, 4) quaternions (w, x, y, z); unit norm outside of
                     optimizer inner steps
      log_scales     (N, 3) log of the per-axis scales
      opacity_logit  (N,)   logit of the blend opacity
      color_coeffs   (N, 3, K) SH coefficients per channel, K = (degree+1)^2,
                     dc at index 0
      f_scale_latent (N, 3) logits of the pseudo scale factors
      f_alpha_latent (N,)   logit of the pseudo opacity factor
      dog_active     (N,)   bool; False renders on the plain Gaussian path
    """

    def __init__(self, positions, rotations, log_scales, opacity_logit,
                 color_coeffs, sh_degree=0, f_scale_latent=None,
                 f_alpha_latent=None, dog_active=None, f_s_max=1.0):
        n = len(positions)
        self.positions = np.asarray(positions, dtype=np.float64).reshape(n, 3)
        self.rotations = np.asarray(rotations, dtype=np.float64).reshape(n, 4)
        self.log_scales = np.asarray(log_scales, dtype=np.float64).reshape(n, 3)
        self.opacity_logit = np.asarray(opacity_logit, dtype=np.float64).reshape(n)
        k = sh_coeff_count(sh_degree)
        self.color_coeffs = np.asarray(color_coeffs, dtype=np.float64).reshape(n, 3, k)
        self.sh_degree = int(sh_degree)
        self.f_s_max = float(f_s_max)
        if f_scale_latent is None:
            f_scale_latent = np.zeros((n, 3))
        if f_alpha_latent is None:
            f_alpha_latent = np.zeros(n)
        if dog_active is None:
            dog_active = np.zeros(n, dtype=bool)
        self.f_scale_latent = np.asarray(f_scale_latent, dtype=np.float64).reshape(n, 3)
        self.f_alpha_latent = np.asarray(f_alpha_latent, dtype=np.float64).reshape(n)
        self.dog_active = np.asarray(dog_active, dtype=bool).reshape(n)

    # -- population -------------------------------------------------------

    @property
    def count(self) -> int:
        return len(self.positions)

    @property
    def dog_count(self) -> int:
        return int(self.dog_active.sum())

    def copy(self) -> "SceneModel":
        return SceneModel(
            self.positions.copy(), self.rotations.copy(),
            self.log_scales.copy(), self.opacity_logit.copy(),
            self.color_coeffs.copy(), self.sh_degree,
            self.f_scale_latent.copy(), self.f_alpha_latent.copy(),
            self.dog_active.copy(), self.f_s_max)

    def compact(self, keep: np.ndarray) -> None:
        """Keep only the primitives selected by `keep` (bool mask or index array)."""
        self.positions = self.positions[keep]
        self.rotations = self.rotations[keep]
        self.log_scales = self.log_scales[keep]
        self.opacity_logit = self.opacity_logit[keep]
        self.color_coeffs = self.color_coeffs[keep]
        self.f_scale_latent = self.f_scale_latent[keep]
        self.f_alpha_latent = self.f_alpha_latent[keep]
        self.dog_active = self.dog_active[keep]

    def normalize_rotations(self) -> None:
        norms = np.linalg.norm(self.rotations, axis=1, keepdims=True)
        self.rotations /= norms

    # -- activations ------------------------------------------------------

    def opacities(self) -> np.ndarray:
        return expit(self.opacity_logit)

    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def dog_scale_factors(self) -> np.ndarray:
        return expit(self.f_scale_latent) * self.f_s_max

    def dog_alpha_factors(self) -> np.ndarray:
        return expit(self.f_alpha_latent)

    def pseudo_opacities(self) -> np.ndarray:
        """Opacity of the subtracted pseudo-Gaussian: alpha_factor * alpha."""
        return self.dog_alpha_factors() * self.opacities()


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from quaternions (..., 4) in (w, x, y, z) order.

    Quaternions are normalized here, so the result is a proper rotation for
    any nonzero input.
    """
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def build_covariance(rotation, log_scales):
    """World covariance R S S^T R^T of one primitive or a batch."""
    r = quat_to_rotmat(rotation)
    s = np.exp(np.asarray(log_scales, dtype=np.float64))
    m = r * s[..., None, :]  # R @ diag(s)
    return m @ np.swapaxes(m, -1, -2)


def build_pseudo_covariance(rotation, log_scales, scale_factors):
    """Covariance of the pseudo-Gaussian: axes scaled by the per-axis factors."""
    r = quat_to_rotmat(rotation)
    s = np.exp(np.asarray(log_scales, dtype=np.float64)) * np.asarray(scale_factors)
    m = r * s[..., None, :]
    return m @ np.swapaxes(m, -1, -2)


def pseudo_opacity(opacity_logit, f_alpha_latent):
    """alpha_p = f_alpha * alpha, both decoded from their logits."""
    return expit(f_alpha_latent) * expit(opacity_logit)


def sh_basis(direction: np.ndarray, degree: int) -> np.ndarray:
    """Real SH basis values for unit directions (..., 3), shape (..., K)."""
    d = np.asarray(direction, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    out = np.empty(d.shape[:-1] + (sh_coeff_count(degree),), dtype=np.float64)
    out[..., 0] = SH_C0
    if degree >= 1:
        out[..., 1] = -SH_C1 * y
        out[..., 2] = SH_C1 * z
        out[..., 3] = -SH_C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        out[..., 4] = SH_C2[0] * x * y
        out[..., 5] = SH_C2[1] * y * z
        out[..., 6] = SH_C2[2] * (2.0 * zz - xx - yy)
        out[..., 7] = SH_C2[3] * x * z
        out[..., 8] = SH_C2[4] * (xx - yy)
    return out


def eval_color(color_coeffs, direction, degree):
    """Decode view-dependent RGB from SH coefficients.

    `direction` must be unit length. Output is left unclamped; clamping to
    [0, 1] happens only when images are quantized for metrics or PNG export.
    """
    basis = sh_basis(direction, degree)
    coeffs = np.asarray(color_coeffs, dtype=np.float64)
    return np.einsum("...ck,...k->...c", coeffs, basis) + SH_DC_OFFSET


def scale_factor_latent(value, f_s_max=1.0):
    """Latent whose activation sigmoid(x) * f_s_max equals `value`."""
    return logit(np.asarray(value, dtype=np.float64) / f_s_max)
