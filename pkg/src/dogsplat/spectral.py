"""Frequency-domain scoring machinery.

The spectral importance of a primitive is the radially weighted Fourier
energy of its opacity-gradient field. Two evaluators are provided:

* the direct form sums w(freq) * |FFT(field)|^2 in the frequency domain;
* the filtered form convolves the field with a kernel whose frequency
  response is sqrt(w) and sums squares in the spatial domain.

With a unitary FFT the two are equal by Parseval, and with w == 1 both
collapse to the plain spatial squared-gradient score, which makes the
spatial and spectral terms of the combined score commensurable. The direct
form is kept as the test oracle; the filtered form is the production path.

Fields whose sides are not powers of two are zero-padded (for scoring only)
to the next power of two, which slightly perturbs their spectra; weight
grids are built at the padded size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidExponentError


@dataclass
class FrequencyWeightGrid:
    """Per-bin radial weights w(freq) = (|freq| / freq_max)^exponent, DC pinned to 0."""

    weights: np.ndarray   # (H, W), in numpy FFT bin order
    exponent: float
    freq_max: float

    @property
    def shape(self):
        return self.weights.shape


def fft2(field: np.ndarray) -> np.ndarray:
    """Unitary 2D DFT over the last two axes; Parseval holds exactly."""
    return np.fft.fft2(field, norm="ortho")


def ifft2(spectrum: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(spectrum, norm="ortho")


def radial_weights(height: int, width: int, exponent: float = 1.0) -> FrequencyWeightGrid:
    """Radial weight schedule over the centered integer frequency grid.

    Frequency components are wrap-aware (k maps to k for k <= N/2, else
    k - N), the norm is Euclidean and freq_max is the largest norm on the
    grid, so the corner Nyquist bin gets weight exactly 1.
    """
    if exponent <= 0:
        raise InvalidExponentError(f"exponent must be > 0, got {exponent}")
    fy = np.arange(height)
    fy = np.where(fy <= height // 2, fy, fy - height).astype(np.float64)
    fx = np.arange(width)
    fx = np.where(fx <= width // 2, fx, fx - width).astype(np.float64)
    norm = np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)
    freq_max = float(norm.max())
    w = (norm / freq_max) ** exponent
    w[0, 0] = 0.0
    return FrequencyWeightGrid(w, float(exponent), freq_max)


def next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def pad_to(field: np.ndarray, height: int, width: int) -> np.ndarray:
    """Zero-pad the two leading spatial axes of (..., H, W) -> (..., height, width)."""
    h, w = field.shape[-2], field.shape[-1]
    if h == height and w == width:
        return field
    out = np.zeros(field.shape[:-2] + (height, width), dtype=field.dtype)
    out[..., :h, :w] = field
    return out


def _prepare(grad_fields: np.ndarray, grid: FrequencyWeightGrid) -> np.ndarray:
    """(N, H, W, C) fields -> (N, C, Hp, Wp) padded to the grid size."""
    fields = np.asarray(grad_fields, dtype=np.float64)
    if fields.ndim == 3:
        fields = fields[..., None]
    n, h, w, c = fields.shape
    gh, gw = grid.shape
    if (gh, gw) != (next_pow2(h), next_pow2(w)):
        raise ValueError(
            f"weight grid {grid.shape} does not match padded field size "
            f"{(next_pow2(h), next_pow2(w))}")
    return pad_to(np.moveaxis(fields, -1, 1), gh, gw)


def spectral_score_direct(grad_fields, grid: FrequencyWeightGrid) -> np.ndarray:
    """Sum over channels and bins of w * |FFT(field)|^2, per primitive."""
    fields = _prepare(grad_fields, grid)
    spectra = fft2(fields)
    return np.einsum("nchw,hw->n", np.abs(spectra) ** 2, grid.weights)


def filtered_score_from_fields(grad_fields, grid: FrequencyWeightGrid) -> np.ndarray:
    """Filter each field with the sqrt(w)-response kernel, sum squares in space."""
    fields = _prepare(grad_fields, grid)
    filtered = ifft2(fft2(fields) * np.sqrt(grid.weights))
    # The kernel response is real and even, so the filtered field is real up
    # to roundoff; the imaginary residue is kept out of the score.
    return (filtered.real ** 2).sum(axis=(1, 2, 3))


def spectral_score_filtered(scene, camera, grid: FrequencyWeightGrid,
                            background=None) -> np.ndarray:
    """Render, pull the per-primitive opacity-gradient fields, filter, score."""
    from .rasterizer import backward, render_with_capture

    if scene.count == 0:
        return np.zeros(0)
    _, capture = render_with_capture(scene, camera, background)
    ones = np.ones((camera.height, camera.width, 3))
    grads = backward(scene, camera, ones, background, capture=capture,
                     want_fields=True)
    return filtered_score_from_fields(grads.opacity_grad_fields, grid)
