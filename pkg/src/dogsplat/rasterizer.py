"""Forward and backward splatting.

Image formation is front-to-back alpha blending of depth-sorted splats. A
difference-of-Gaussians primitive contributes the blend weight
alpha' - alpha_p', which may be negative; transmittance then grows through
that contribution, so the weight is clamped to keep (1 - weight) bounded.

The backward pass is exact reverse-mode of this forward: it re-walks the
per-pixel contributor lists back to front, recovering transmittance by
division, and chains through the conic, the projection Jacobian, the
covariance factorization and every activation. The naive and tiled forward
paths evaluate each splat's weight field once and perform identical
per-pixel arithmetic (the tiled path only reorders the outer loop), so the
two images agree bitwise and one backward serves both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .projection import ProjectedScene
from .scene import SH_C1, SH_C2, SceneModel, sh_basis, sh_coeff_count

# Contributions with |weight| below this are skipped (absolute value, so the
# negative ring of a DoG is kept).
SKIP_WEIGHT = 1.0 / 255.0

# A contribution that would push transmittance below this is dropped and the
# pixel stops accepting further splats.
T_TERMINATE = 1e-4

# Symmetric blend-weight clamp; the upper side mirrors the backbone's 0.99
# opacity cap, the lower side keeps (1 - weight) bounded for negative weights.
WEIGHT_CLAMP = 0.99

TILE = 16


@dataclass
class RenderResult:
    """Rendered image plus the per-pixel blending state."""

    image: np.ndarray        # (H, W, 3), unclamped
    final_t: np.ndarray      # (H, W) transmittance after all contributions
    n_contrib: np.ndarray    # (H, W) number of accepted contributions

    @property
    def clamped(self) -> np.ndarray:
        return np.clip(self.image, 0.0, 1.0)


class _SplatPatch:
    """One splat's weight fields on its clipped bounding box."""

    __slots__ = ("index", "box", "g", "gp", "raw", "beta", "clamped_any")

    def __init__(self, index, box, g, gp, raw, beta, clamped_any):
        self.index = index
        self.box = box          # (x0, x1, y0, y1)
        self.g = g              # primary falloff exp(-0.5 d^T conic d)
        self.gp = gp            # pseudo falloff, None on the plain path
        self.raw = raw          # unclamped blend weight
        self.beta = beta        # clamped blend weight
        self.clamped_any = clamped_any


@dataclass
class RenderCapture:
    """Forward state needed to re-walk the blend in reverse."""

    proj: ProjectedScene
    camera: object
    background: np.ndarray
    image: np.ndarray
    final_t: np.ndarray
    last_rank: np.ndarray    # (H, W) rank of the last accepted contributor, 0 if none
    n_contrib: np.ndarray
    patches: list            # _SplatPatch per drawn splat, in depth order
    scene: SceneModel


@dataclass
class GradientBundle:
    """Per-primitive gradients for every latent plus the pruning accumulators."""

    d_position: np.ndarray
    d_rotation: np.ndarray
    d_log_scales: np.ndarray
    d_opacity_logit: np.ndarray
    d_color_coeffs: np.ndarray
    d_f_scale_latent: np.ndarray
    d_f_alpha_latent: np.ndarray
    spatial_sq_grad: np.ndarray          # sum over pixels/channels of (dI/dalpha_i)^2
    opacity_grad_fields: np.ndarray | None = None  # (N, H, W, 3) dI/dalpha_i


def effective_weight(mean2d, conic, alpha, x, pseudo_conic=None, pseudo_alpha=0.0):
    """Blend weight of one splat at one pixel.

    conic is the (a, b, c) upper triangle of the inverse 2x2 covariance.
    For an active DoG the pseudo branch is subtracted before clamping.
    """
    d = np.asarray(x, dtype=np.float64) - np.asarray(mean2d, dtype=np.float64)
    a, b, c = conic
    g = np.exp(-0.5 * (a * d[0] ** 2 + c * d[1] ** 2) - b * d[0] * d[1])
    w = alpha * g
    if pseudo_conic is not None:
        pa, pb, pc = pseudo_conic
        gp = np.exp(-0.5 * (pa * d[0] ** 2 + pc * d[1] ** 2) - pb * d[0] * d[1])
        w = w - pseudo_alpha * gp
    return float(np.clip(w, -WEIGHT_CLAMP, WEIGHT_CLAMP))


def _bbox(mean2d, radius, width, height):
    x0 = max(0, int(np.floor(mean2d[0] - radius)))
    x1 = min(width, int(np.ceil(mean2d[0] + radius)) + 1)
    y0 = max(0, int(np.floor(mean2d[1] - radius)))
    y1 = min(height, int(np.ceil(mean2d[1] + radius)) + 1)
    return x0, x1, y0, y1


def _make_patch(proj, i, width, height):
    box = _bbox(proj.mean2d[i], proj.radius[i], width, height)
    x0, x1, y0, y1 = box
    if x0 >= x1 or y0 >= y1:
        return None
    mx, my = proj.mean2d[i]
    dx = np.arange(x0, x1) + 0.5 - mx
    dy = np.arange(y0, y1) + 0.5 - my
    a, b, c = proj.conic[i]
    power = (-0.5 * a) * dx[None, :] ** 2 + (-0.5 * c) * dy[:, None] ** 2 \
        - b * dy[:, None] * dx[None, :]
    g = np.exp(power)
    if proj.is_dog[i]:
        pa, pb, pc = proj.pseudo_conic[i]
        ppower = (-0.5 * pa) * dx[None, :] ** 2 + (-0.5 * pc) * dy[:, None] ** 2 \
            - pb * dy[:, None] * dx[None, :]
        gp = np.exp(ppower)
        raw = proj.alpha[i] * g - proj.pseudo_alpha[i] * gp
    else:
        gp = None
        raw = proj.alpha[i] * g
    clamped_any = bool(np.abs(raw).max() > WEIGHT_CLAMP)
    beta = np.clip(raw, -WEIGHT_CLAMP, WEIGHT_CLAMP) if clamped_any else raw
    return _SplatPatch(i, box, g, gp, raw, beta, clamped_any)


def _blend(patch, rank, color, sub, image, trans, done, last_rank, n_contrib):
    """Composite one splat patch (or a tile-clipped part of it) into the frame."""
    x0, x1, y0, y1 = sub
    px0, _, py0, _ = patch.box
    beta = patch.beta[y0 - py0:y1 - py0, x0 - px0:x1 - px0]
    t = trans[y0:y1, x0:x1]
    contrib = (np.abs(beta) >= SKIP_WEIGHT) & ~done[y0:y1, x0:x1]
    if not contrib.any():
        return
    t_new = t * (1.0 - beta)
    dying = contrib & (t_new < T_TERMINATE)
    contrib &= ~dying
    done[y0:y1, x0:x1] |= dying
    w = np.where(contrib, beta * t, 0.0)
    image[y0:y1, x0:x1] += w[:, :, None] * color
    trans[y0:y1, x0:x1] = np.where(contrib, t_new, t)
    last_rank[y0:y1, x0:x1][contrib] = rank
    n_contrib[y0:y1, x0:x1][contrib] += 1


def _render(scene, camera, background, tiled):
    h, w = camera.height, camera.width
    bg = np.zeros(3) if background is None else np.asarray(background, dtype=np.float64)
    proj = ProjectedScene(scene, camera)
    image = np.zeros((h, w, 3))
    trans = np.ones((h, w))
    done = np.zeros((h, w), dtype=bool)
    last_rank = np.zeros((h, w), dtype=np.int32)
    n_contrib = np.zeros((h, w), dtype=np.int32)

    patches = [_make_patch(proj, i, w, h) for i in proj.order]
    if not tiled:
        for rank, patch in enumerate(patches, start=1):
            if patch is None:
                continue
            _blend(patch, rank, proj.colors[patch.index], patch.box,
                   image, trans, done, last_rank, n_contrib)
    else:
        tiles_x = (w + TILE - 1) // TILE
        tiles_y = (h + TILE - 1) // TILE
        tile_lists = [[] for _ in range(tiles_x * tiles_y)]
        # Appending in global order keeps each tile's list depth-sorted.
        for rank, patch in enumerate(patches, start=1):
            if patch is None:
                continue
            x0, x1, y0, y1 = patch.box
            for ty in range(y0 // TILE, (y1 - 1) // TILE + 1):
                for tx in range(x0 // TILE, (x1 - 1) // TILE + 1):
                    tile_lists[ty * tiles_x + tx].append((rank, patch))
        for ty in range(tiles_y):
            ty0, ty1 = ty * TILE, min((ty + 1) * TILE, h)
            for tx in range(tiles_x):
                tx0, tx1 = tx * TILE, min((tx + 1) * TILE, w)
                for rank, patch in tile_lists[ty * tiles_x + tx]:
                    x0, x1, y0, y1 = patch.box
                    sub = (max(x0, tx0), min(x1, tx1), max(y0, ty0), min(y1, ty1))
                    if sub[0] >= sub[1] or sub[2] >= sub[3]:
                        continue
                    _blend(patch, rank, proj.colors[patch.index], sub,
                           image, trans, done, last_rank, n_contrib)

    image += trans[:, :, None] * bg
    capture = RenderCapture(proj, camera, bg, image, trans, last_rank,
                            n_contrib, patches, scene)
    return RenderResult(image, trans, n_contrib), capture


def render_naive(scene, camera, background=None):
    """Reference path: one global pass over depth-sorted splats."""
    return _render(scene, camera, background, tiled=False)[0]


def render_tiled(scene, camera, background=None):
    """Tiled path: 16x16 tiles with per-tile splat lists in global depth order."""
    return _render(scene, camera, background, tiled=True)[0]


def render_with_capture(scene, camera, background=None, tiled=True):
    """Render and keep the state the backward pass needs."""
    return _render(scene, camera, background, tiled=tiled)


def _normalize_vjp(v, grad_unit):
    """Pull a gradient w.r.t. v/|v| back to v."""
    n = np.linalg.norm(v)
    u = v / n
    return (grad_unit - u * np.dot(u, grad_unit)) / n


def _quat_rotation_vjp(q_unit, d_rot):
    """Gradient w.r.t. a unit quaternion (w, x, y, z) given dL/dR."""
    w, x, y, z = q_unit
    dw = 2.0 * (-z * d_rot[0, 1] + y * d_rot[0, 2] + z * d_rot[1, 0]
                - x * d_rot[1, 2] - y * d_rot[2, 0] + x * d_rot[2, 1])
    dx = 2.0 * (y * d_rot[0, 1] + z * d_rot[0, 2] + y * d_rot[1, 0]
                - w * d_rot[1, 2] + z * d_rot[2, 0] + w * d_rot[2, 1]) \
        - 4.0 * x * (d_rot[1, 1] + d_rot[2, 2])
    dy = 2.0 * (x * d_rot[0, 1] + w * d_rot[0, 2] + x * d_rot[1, 0]
                + z * d_rot[1, 2] - w * d_rot[2, 0] + z * d_rot[2, 1]) \
        - 4.0 * y * (d_rot[0, 0] + d_rot[2, 2])
    dz = 2.0 * (-w * d_rot[0, 1] + x * d_rot[0, 2] + w * d_rot[1, 0]
                + y * d_rot[1, 2] + x * d_rot[2, 0] + y * d_rot[2, 1]) \
        - 4.0 * z * (d_rot[0, 0] + d_rot[1, 1])
    return np.array([dw, dx, dy, dz])


def _sh_basis_dir_jacobian(direction, degree):
    """d(basis_k)/d(direction) as (..., K, 3) for unit directions (..., 3)."""
    d = np.asarray(direction, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    jac = np.zeros(d.shape[:-1] + (sh_coeff_count(degree), 3))
    if degree >= 1:
        jac[..., 1, 1] = -SH_C1
        jac[..., 2, 2] = SH_C1
        jac[..., 3, 0] = -SH_C1
    if degree >= 2:
        jac[..., 4, 0] = SH_C2[0] * y
        jac[..., 4, 1] = SH_C2[0] * x
        jac[..., 5, 1] = SH_C2[1] * z
        jac[..., 5, 2] = SH_C2[1] * y
        jac[..., 6, 0] = -2.0 * SH_C2[2] * x
        jac[..., 6, 1] = -2.0 * SH_C2[2] * y
        jac[..., 6, 2] = 4.0 * SH_C2[2] * z
        jac[..., 7, 0] = SH_C2[3] * z
        jac[..., 7, 2] = SH_C2[3] * x
        jac[..., 8, 0] = 2.0 * SH_C2[4] * x
        jac[..., 8, 1] = -2.0 * SH_C2[4] * y
    return jac


def _conic_mats(conics):
    """(S, 3) conic triples -> (S, 2, 2) matrices."""
    mats = np.empty(conics.shape[:-1] + (2, 2))
    mats[..., 0, 0] = conics[..., 0]
    mats[..., 0, 1] = conics[..., 1]
    mats[..., 1, 0] = conics[..., 1]
    mats[..., 1, 1] = conics[..., 2]
    return mats


def _quat_rotation_vjp_batch(q_unit, d_rot):
    """Gradients w.r.t. unit quaternions (S, 4) given dL/dR (S, 3, 3)."""
    w, x, y, z = q_unit[:, 0], q_unit[:, 1], q_unit[:, 2], q_unit[:, 3]
    r = d_rot
    dw = 2.0 * (-z * r[:, 0, 1] + y * r[:, 0, 2] + z * r[:, 1, 0]
                - x * r[:, 1, 2] - y * r[:, 2, 0] + x * r[:, 2, 1])
    dx = 2.0 * (y * r[:, 0, 1] + z * r[:, 0, 2] + y * r[:, 1, 0]
                - w * r[:, 1, 2] + z * r[:, 2, 0] + w * r[:, 2, 1]) \
        - 4.0 * x * (r[:, 1, 1] + r[:, 2, 2])
    dy = 2.0 * (x * r[:, 0, 1] + w * r[:, 0, 2] + x * r[:, 1, 0]
                + z * r[:, 1, 2] - w * r[:, 2, 0] + z * r[:, 2, 1]) \
        - 4.0 * y * (r[:, 0, 0] + r[:, 2, 2])
    dz = 2.0 * (-w * r[:, 0, 1] + x * r[:, 0, 2] + w * r[:, 1, 0]
                + y * r[:, 1, 2] + x * r[:, 2, 0] + y * r[:, 2, 1]) \
        - 4.0 * z * (r[:, 0, 0] + r[:, 1, 1])
    return np.stack([dw, dx, dy, dz], axis=1)


def _normalize_vjp_batch(v, grad_unit):
    """Pull gradients w.r.t. v/|v| back to v, batched over rows."""
    n = np.linalg.norm(v, axis=1, keepdims=True)
    u = v / n
    return (grad_unit - u * np.einsum("si,si->s", u, grad_unit)[:, None]) / n


def backward(scene, camera, dl_dimage, background=None, capture=None,
             want_fields=False, include_position_in_spatial=False):
    """Gradients of sum(dl_dimage * image) w.r.t. every scene latent.

    The reverse pixel walk is sequential (transmittance and the color tail
    depend on blend order); it only gathers per-splat pixel moments. The
    chain rule through conics, projection, the covariance factorization and
    the activations is then applied to all splats at once.

    Also accumulates the pruning statistics: spatial_sq_grad (the sum of
    squared per-pixel opacity gradients, independent of the adjoint) and,
    when `want_fields`, the per-primitive opacity-gradient fields the
    spectral scorer consumes.
    """
    if capture is None:
        _, capture = _render(scene, camera, background, tiled=False)
    proj = capture.proj
    cam = capture.camera
    h, w = cam.height, cam.width
    n = scene.count
    adj = np.asarray(dl_dimage, dtype=np.float64).reshape(h, w, 3)
    bg = capture.background

    out = GradientBundle(
        d_position=np.zeros((n, 3)),
        d_rotation=np.zeros((n, 4)),
        d_log_scales=np.zeros((n, 3)),
        d_opacity_logit=np.zeros(n),
        d_color_coeffs=np.zeros_like(scene.color_coeffs),
        d_f_scale_latent=np.zeros((n, 3)),
        d_f_alpha_latent=np.zeros(n),
        spatial_sq_grad=np.zeros(n),
        opacity_grad_fields=np.zeros((n, h, w, 3)) if want_fields else None,
    )

    t_run = capture.final_t.copy()
    suffix = np.zeros((h, w, 3))
    alphas = proj.alpha
    f_alpha = scene.dog_alpha_factors()
    bg_any = bool(bg.any())

    # Per-splat pixel moments gathered by the reverse walk.
    slots = []        # primitive index per contributing splat
    col_grads = []    # (3,) color gradient
    dot_g = []        # sum over pixels of d_beta_eff * g
    dot_gp = []       # same for the pseudo falloff (0 on the plain path)
    mom_p = []        # (5,) primary falloff moments: xx, xy, yy, x, y
    mom_q = []        # (5,) pseudo falloff moments

    for rank in range(len(capture.patches), 0, -1):
        patch = capture.patches[rank - 1]
        if patch is None:
            continue
        i = patch.index
        x0, x1, y0, y1 = patch.box
        beta = patch.beta
        m = (capture.last_rank[y0:y1, x0:x1] >= rank) & (np.abs(beta) >= SKIP_WEIGHT)
        if not m.any():
            continue
        is_dog = proj.is_dog[i]
        beta_m = beta[m]
        inv_om = 1.0 / (1.0 - beta_m)
        t_before = t_run[y0:y1, x0:x1][m] * inv_om
        t_run[y0:y1, x0:x1][m] = t_before

        color = proj.colors[i]
        suf = suffix[y0:y1, x0:x1][m]
        # dC/dbeta at each pixel: own term minus the rescaled tail and background.
        v = t_before[:, None] * (color[None, :] - suf)
        if bg_any:
            v -= (capture.final_t[y0:y1, x0:x1][m] * inv_om)[:, None] * bg[None, :]
        a_pix = adj[y0:y1, x0:x1][m]
        d_beta = np.einsum("pc,pc->p", a_pix, v)
        if patch.clamped_any:
            live = np.abs(patch.raw[m]) <= WEIGHT_CLAMP  # clamp gates the chain
            d_beta_eff = np.where(live, d_beta, 0.0)
        else:
            live = True
            d_beta_eff = d_beta

        g_m = patch.g[m]
        mx, my = proj.mean2d[i]
        dx_m = np.broadcast_to(np.arange(x0, x1)[None, :] + 0.5 - mx, beta.shape)[m]
        dy_m = np.broadcast_to(np.arange(y0, y1)[:, None] + 0.5 - my, beta.shape)[m]
        dxx, dxy, dyy = dx_m * dx_m, dx_m * dy_m, dy_m * dy_m

        d_power = d_beta_eff * (alphas[i] * g_m)
        mom_primary = (np.dot(d_power, dxx), np.dot(d_power, dxy),
                       np.dot(d_power, dyy), np.dot(d_power, dx_m),
                       np.dot(d_power, dy_m))
        if is_dog:
            gp_m = patch.gp[m]
            d_ppower = d_beta_eff * (-proj.pseudo_alpha[i] * gp_m)
            mom_pseudo = (np.dot(d_ppower, dxx), np.dot(d_ppower, dxy),
                          np.dot(d_ppower, dyy), np.dot(d_ppower, dx_m),
                          np.dot(d_ppower, dy_m))
            dgp = float(np.dot(d_beta_eff, gp_m))
            d_beta_d_alpha = g_m - f_alpha[i] * gp_m
        else:
            gp_m = None
            mom_pseudo = (0.0, 0.0, 0.0, 0.0, 0.0)
            dgp = 0.0
            d_beta_d_alpha = g_m
        if patch.clamped_any:
            d_beta_d_alpha = d_beta_d_alpha * live

        slots.append(i)
        col_grads.append((a_pix * (beta_m * t_before)[:, None]).sum(axis=0))
        dot_g.append(float(np.dot(d_beta_eff, g_m)))
        dot_gp.append(dgp)
        mom_p.append(mom_primary)
        mom_q.append(mom_pseudo)

        # Pruning statistics: per-pixel gradient of the image w.r.t. the
        # activated opacity, independent of the adjoint.
        j_field = d_beta_d_alpha[:, None] * v
        out.spatial_sq_grad[i] += float((j_field ** 2).sum())
        if include_position_in_spatial:
            ca, cb, cc = proj.conic[i]
            gpos_x = -(ca * dx_m + cb * dy_m) * g_m * alphas[i]
            gpos_y = -(cb * dx_m + cc * dy_m) * g_m * alphas[i]
            if is_dog:
                pa, pb, pc = proj.pseudo_conic[i]
                gpos_x += (pa * dx_m + pb * dy_m) * gp_m * proj.pseudo_alpha[i]
                gpos_y += (pb * dx_m + pc * dy_m) * gp_m * proj.pseudo_alpha[i]
            if patch.clamped_any:
                gpos_x = gpos_x * live
                gpos_y = gpos_y * live
            out.spatial_sq_grad[i] += float(
                ((gpos_x[:, None] * v) ** 2).sum()
                + ((gpos_y[:, None] * v) ** 2).sum())
        if want_fields:
            out.opacity_grad_fields[i, y0:y1, x0:x1][m] = j_field

        # Fold this splat into the tail.
        suffix[y0:y1, x0:x1][m] = beta_m[:, None] * color[None, :] \
            + (1.0 - beta_m)[:, None] * suf

    if not slots:
        return out

    idx = np.array(slots)
    d_color = np.array(col_grads)            # (S, 3)
    dot_g = np.array(dot_g)
    dot_gp = np.array(dot_gp)
    mom_p = np.array(mom_p)                  # (S, 5)
    mom_q = np.array(mom_q)
    al = alphas[idx]
    fa = f_alpha[idx]

    # Opacity and pseudo-opacity activations (dot_gp is 0 on the plain path).
    d_alpha = dot_g - fa * dot_gp
    out.d_opacity_logit[idx] += d_alpha * al * (1.0 - al)
    out.d_f_alpha_latent[idx] += -al * dot_gp * fa * (1.0 - fa)

    # Color coefficients and, for view-dependent colors, the direction chain.
    dir_raw = scene.positions[idx] - cam.center
    dir_unit = dir_raw / np.linalg.norm(dir_raw, axis=1, keepdims=True)
    basis = sh_basis(dir_unit, scene.sh_degree)
    out.d_color_coeffs[idx] += d_color[:, :, None] * basis[:, None, :]
    d_position = np.zeros((len(idx), 3))
    if scene.sh_degree >= 1:
        jac = _sh_basis_dir_jacobian(dir_unit, scene.sh_degree)
        weighted = np.einsum("sc,sck->sk", d_color, scene.color_coeffs[idx])
        d_position += _normalize_vjp_batch(dir_raw, np.einsum(
            "sk,skd->sd", weighted, jac))

    def cov_chain(conics, moments):
        """Conic moments -> (dL/dcov2d, dL/dmean2d), batched."""
        d_conic = np.empty((len(idx), 2, 2))
        d_conic[:, 0, 0] = -0.5 * moments[:, 0]
        d_conic[:, 0, 1] = -0.5 * moments[:, 1]
        d_conic[:, 1, 0] = -0.5 * moments[:, 1]
        d_conic[:, 1, 1] = -0.5 * moments[:, 2]
        cmat = _conic_mats(conics)
        d_cov = -np.einsum("sij,sjk,skl->sil", cmat, d_conic, cmat)
        d_mean = np.stack(
            [conics[:, 0] * moments[:, 3] + conics[:, 1] * moments[:, 4],
             conics[:, 1] * moments[:, 3] + conics[:, 2] * moments[:, 4]], axis=1)
        return d_cov, d_mean

    d_cov, d_mean2d = cov_chain(proj.conic[idx], mom_p)
    d_pcov, d_pmean = cov_chain(proj.pseudo_conic[idx], mom_q)
    d_mean2d += d_pmean

    # Projection chain: cov2d = P cov3d P^T + dilation, P = J W_rot; the
    # pseudo moments are zero on the plain path so one batched pass covers
    # both kinds of primitive.
    t = proj.t_cam[idx]
    tz = t[:, 2]
    jmat = np.zeros((len(idx), 2, 3))
    jmat[:, 0, 0] = cam.fx / tz
    jmat[:, 0, 2] = -cam.fx * t[:, 0] / (tz * tz)
    jmat[:, 1, 1] = cam.fy / tz
    jmat[:, 1, 2] = -cam.fy * t[:, 1] / (tz * tz)
    p = jmat @ cam.rotation
    rot = proj.rot_mats[idx]
    sc = proj.scales[idx]
    fs = proj.factors[idx]
    m3 = rot * sc[:, None, :]
    mp = rot * (sc * fs)[:, None, :]
    d_sigma = np.einsum("sai,sab,sbj->sij", p, d_cov, p)
    d_psigma = np.einsum("sai,sab,sbj->sij", p, d_pcov, p)
    d_p = 2.0 * (np.einsum("sab,sbi,sij->saj", d_cov, p, m3 @ m3.transpose(0, 2, 1))
                 + np.einsum("sab,sbi,sij->saj", d_pcov, p,
                             mp @ mp.transpose(0, 2, 1)))
    d_m3 = 2.0 * d_sigma @ m3
    d_mp = 2.0 * d_psigma @ mp
    d_sf = np.einsum("sij,sij->sj", rot, d_mp)
    d_scales = np.einsum("sij,sij->sj", rot, d_m3) + d_sf * fs
    out.d_log_scales[idx] += d_scales * sc
    out.d_f_scale_latent[idx] += d_sf * sc * fs * (1.0 - fs / scene.f_s_max)

    d_rotmat = d_m3 * sc[:, None, :] + d_mp * (sc * fs)[:, None, :]
    q = scene.rotations[idx]
    q_unit = q / np.linalg.norm(q, axis=1, keepdims=True)
    out.d_rotation[idx] += _normalize_vjp_batch(
        q, _quat_rotation_vjp_batch(q_unit, d_rotmat))

    # Jacobian entries depend on the camera-space point; the projected mean
    # reuses the same Jacobian.
    d_j = d_p @ cam.rotation.T
    inv_tz2 = 1.0 / (tz * tz)
    d_t = np.empty((len(idx), 3))
    d_t[:, 0] = d_j[:, 0, 2] * (-cam.fx * inv_tz2)
    d_t[:, 1] = d_j[:, 1, 2] * (-cam.fy * inv_tz2)
    d_t[:, 2] = (d_j[:, 0, 0] * (-cam.fx * inv_tz2)
                 + d_j[:, 1, 1] * (-cam.fy * inv_tz2)
                 + d_j[:, 0, 2] * (2.0 * cam.fx * t[:, 0] * inv_tz2 / tz)
                 + d_j[:, 1, 2] * (2.0 * cam.fy * t[:, 1] * inv_tz2 / tz))
    d_t += np.einsum("sab,sa->sb", jmat, d_mean2d)
    d_position += d_t @ cam.rotation
    out.d_position[idx] += d_position

    return out
