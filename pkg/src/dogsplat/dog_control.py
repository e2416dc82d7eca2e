"""Lifecycle of the difference-of-Gaussians extension.

After pruning finishes, every surviving primitive gets an active pseudo
branch with fixed initial factors. During refinement, primitives whose
opacity factor falls below the threshold are irreversibly degraded back to
plain Gaussians; their extension latents stop participating in rendering
and optimization.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logit

DEFAULT_SCALE_FACTOR_INIT = 0.5
DEFAULT_ALPHA_FACTOR_INIT = 0.1
DEFAULT_DEGRADE_THRESHOLD = 0.01


def activate_dog(scene, scale_factor_init=DEFAULT_SCALE_FACTOR_INIT,
                 alpha_factor_init=DEFAULT_ALPHA_FACTOR_INIT) -> int:
    """Turn every inactive primitive into a DoG with the given initial factors.

    Idempotent: already-active primitives keep their trained latents.
    Returns the number of newly activated primitives.
    """
    fresh = ~scene.dog_active
    n_new = int(fresh.sum())
    if n_new:
        scene.f_scale_latent[fresh] = logit(scale_factor_init / scene.f_s_max)
        scene.f_alpha_latent[fresh] = logit(alpha_factor_init)
        scene.dog_active[fresh] = True
    return n_new


def degrade_step(scene, threshold=DEFAULT_DEGRADE_THRESHOLD,
                 rule="f_alpha") -> int:
    """Deactivate weak DoGs; returns how many were degraded this call.

    The default rule tests the opacity factor itself (strict <); the
    alternative tests the pseudo opacity factor * alpha instead.
    """
    if rule == "f_alpha":
        weak = scene.dog_alpha_factors() < threshold
    elif rule == "alpha_p":
        weak = scene.pseudo_opacities() < threshold
    else:
        raise ValueError(f"unknown degrade rule {rule!r}")
    hit = scene.dog_active & weak
    count = int(hit.sum())
    if count:
        scene.dog_active[hit] = False
    return count
