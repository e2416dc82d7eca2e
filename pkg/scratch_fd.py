"""Scratch: finite-difference check of the rasterizer backward."""
import numpy as np
from scipy.special import logit

from dogsplat.camera import ring_cameras
from dogsplat.rasterizer import backward, render_naive, render_tiled, render_with_capture
from dogsplat.scene import SceneModel


def random_scene(seed, n=6, sh_degree=1, f_s_max=1.0, dog_fraction=0.5):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-0.35, 0.35, size=(n, 3))
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    ls = np.log(rng.uniform(0.05, 0.18, size=(n, 3)))
    op = logit(rng.uniform(0.3, 0.85, size=n))
    k = (sh_degree + 1) ** 2
    coeffs = np.zeros((n, 3, k))
    coeffs[:, :, 0] = rng.uniform(-0.5, 0.5, size=(n, 3))
    if k > 1:
        coeffs[:, :, 1:] = rng.uniform(-0.2, 0.2, size=(n, 3, k - 1))
    fs = logit(rng.uniform(0.3, 0.7, size=(n, 3)) / f_s_max)
    fa = logit(rng.uniform(0.05, 0.4, size=n))
    active = rng.uniform(size=n) < dog_fraction
    return SceneModel(pos, q, ls, op, coeffs, sh_degree, fs, fa, active, f_s_max)


def fd_check(seed, res=32, n=6, sh_degree=1, f_s_max=1.0, eps=1e-4, verbose=True):
    scene = random_scene(seed, n, sh_degree, f_s_max)
    cam = ring_cameras(1, res, res)[0]
    rng = np.random.default_rng(seed + 1000)
    adj = rng.uniform(0.1, 1.0, size=(res, res, 3))
    bg = np.array([0.12, 0.1, 0.08])

    res_n = render_naive(scene, cam, bg)
    res_t = render_tiled(scene, cam, bg)
    tiled_diff = np.abs(res_n.image - res_t.image).max()

    grads = backward(scene, cam, adj, bg)

    def functional():
        return float((render_naive(scene, cam, bg).image * adj).sum())

    params = [
        ("position", scene.positions, grads.d_position),
        ("rotation", scene.rotations, grads.d_rotation),
        ("log_scales", scene.log_scales, grads.d_log_scales),
        ("opacity_logit", scene.opacity_logit, grads.d_opacity_logit),
        ("color", scene.color_coeffs, grads.d_color_coeffs),
        ("f_scale", scene.f_scale_latent, grads.d_f_scale_latent),
        ("f_alpha", scene.f_alpha_latent, grads.d_f_alpha_latent),
    ]
    worst = {}
    for name, arr, g in params:
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        max_err = 0.0
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            fp = functional()
            flat[idx] = orig - eps
            fm = functional()
            flat[idx] = orig
            fd = (fp - fm) / (2 * eps)
            an = gflat[idx]
            if abs(an) < 1e-3:
                err = abs(an - fd)
                ok = err <= 1e-7
            else:
                err = abs(an - fd) / abs(fd if fd != 0 else an)
                ok = err <= 1e-4
            if not ok and verbose:
                print(f"  MISMATCH {name}[{idx}]: analytic={an:.8g} fd={fd:.8g} err={err:.3g}")
            max_err = max(max_err, err if abs(an) >= 1e-3 else 0.0)
        worst[name] = max_err
    return tiled_diff, worst


if __name__ == "__main__":
    for seed in range(3):
        for fsm in (1.0, 2.0):
            td, worst = fd_check(seed, f_s_max=fsm)
            print(f"seed={seed} f_s_max={fsm} tiled_diff={td:.3g} "
                  + " ".join(f"{k}={v:.2e}" for k, v in worst.items()))
