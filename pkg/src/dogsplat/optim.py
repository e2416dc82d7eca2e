"""Adam over named parameter groups with prune-aware moment state.

Each scene array is one group with its own learning rate; the position rate
follows the backbone's exponential decay. Moments are stored per primitive,
so pruning compacts them with the same index map as the scene and surviving
primitives keep their full optimizer history.
"""

from __future__ import annotations

import numpy as np


class AdamState:
    __slots__ = ("m", "v")

    def __init__(self, shape):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)


def exponential_lr(step, total_steps, lr_init, lr_final):
    """Log-linear interpolation from lr_init to lr_final over total_steps."""
    t = min(max(step / max(total_steps, 1), 0.0), 1.0)
    return float(lr_init * (lr_final / lr_init) ** t)


class SceneOptimizer:
    """Adam updates for every latent group of a SceneModel."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-15  # backbone value; the raw second moments stay well above it

    GROUPS = ("positions", "rotations", "log_scales", "opacity_logit",
              "color_coeffs", "f_scale_latent", "f_alpha_latent")

    def __init__(self, scene, lr_position=1.6e-4, lr_position_final=1.6e-6,
                 lr_rotation=1e-3, lr_scale=5e-3, lr_opacity=5e-2,
                 lr_color=2.5e-3, lr_dog=5e-3, total_steps=30000):
        self.lr = {
            "positions": lr_position,
            "rotations": lr_rotation,
            "log_scales": lr_scale,
            "opacity_logit": lr_opacity,
            "color_coeffs": lr_color,
            "f_scale_latent": lr_dog,
            "f_alpha_latent": lr_dog,
        }
        self.lr_position_final = lr_position_final
        self.total_steps = total_steps
        self.step_count = 0
        self.state = {g: AdamState(getattr(scene, g).shape) for g in self.GROUPS}

    def compact(self, keep) -> None:
        """Drop moment rows of pruned primitives (same index map as the scene)."""
        for st in self.state.values():
            st.m = st.m[keep]
            st.v = st.v[keep]

    def step(self, scene, grads) -> None:
        """One Adam update; inactive DoG latents are frozen in place."""
        self.step_count += 1
        b1, b2 = self.BETA1, self.BETA2
        bc1 = 1.0 - b1 ** self.step_count
        bc2 = 1.0 - b2 ** self.step_count
        grad_map = {
            "positions": grads.d_position,
            "rotations": grads.d_rotation,
            "log_scales": grads.d_log_scales,
            "opacity_logit": grads.d_opacity_logit,
            "color_coeffs": grads.d_color_coeffs,
            "f_scale_latent": grads.d_f_scale_latent,
            "f_alpha_latent": grads.d_f_alpha_latent,
        }
        frozen = ~scene.dog_active
        for name in self.GROUPS:
            g = grad_map[name]
            if name in ("f_scale_latent", "f_alpha_latent") and frozen.any():
                g = g.copy()
                g[frozen] = 0.0
            st = self.state[name]
            st.m = b1 * st.m + (1.0 - b1) * g
            st.v = b2 * st.v + (1.0 - b2) * g * g
            if name == "positions":
                lr = exponential_lr(self.step_count, self.total_steps,
                                    self.lr["positions"], self.lr_position_final)
            else:
                lr = self.lr[name]
            update = lr * (st.m / bc1) / (np.sqrt(st.v / bc2) + self.EPS)
            if name in ("f_scale_latent", "f_alpha_latent") and frozen.any():
                update = np.where(
                    frozen.reshape((-1,) + (1,) * (update.ndim - 1)), 0.0, update)
            getattr(scene, name)[...] -= update
        scene.normalize_rotations()
