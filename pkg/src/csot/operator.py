"""Ingredients of the structural operator: labels, cost, regulariser, scores."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .spectral import circular_correlate, dft2, idft2, pad_spectrum


@dataclass(frozen=True)
class LabelSpec:
    """Gaussian label; ``sigma`` and ``center`` are fractions of the period.

    ``center`` is ``(x, y)``, i.e. (column, row).
    """

    sigma: float = 0.1
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("label sigma must be positive")
        if not all(0.0 <= c < 1.0 for c in self.center):
            raise ValueError("label center must lie in [0, 1)")


def gaussian_label_coefficients(k, sigma, period=1.0, center=0.0):
    """Fourier-series coefficients of the periodised unit-peak Gaussian."""
    k = np.asarray(k, dtype=float)
    return (np.sqrt(2 * np.pi * sigma ** 2) / period
            * np.exp(-2 * sigma ** 2 * (np.pi * k / period) ** 2
                     - 2j * np.pi * k * center / period))


def _label_axis(n, sigma, center):
    # DFT of the n samples: n * sum over aliases of the series coefficients
    k = np.rint(np.fft.fftfreq(n) * n)
    reach = int(np.ceil(np.sqrt(20.0) / (np.pi * sigma * n))) + 1
    out = np.zeros(n, dtype=complex)
    for m in range(-reach, reach + 1):
        out += gaussian_label_coefficients(k + m * n, sigma, 1.0, center)
    return n * out


def gaussian_label_spectrum(spec: LabelSpec, grid):
    """DFT of the label sampled on ``grid`` (``idft2`` gives a unit peak)."""
    h, w = (grid, grid) if np.isscalar(grid) else grid
    cx, cy = spec.center
    return np.multiply.outer(_label_axis(h, spec.sigma, cy), _label_axis(w, spec.sigma, cx))


def label_map(spec: LabelSpec, grid):
    return idft2(gaussian_label_spectrum(spec, grid))


def cost_map(spec: LabelSpec, grid):
    """Training cost ``1 - m`` of every circular shift."""
    return 1.0 - label_map(spec, grid)


@dataclass(frozen=True)
class Regularizer:
    """Spatial penalty weights and their (truncated) spectrum.

    ``weights`` is the dense quadratic; ``effective`` is the spatial function
    whose spectrum is the truncated one, i.e. what the solvers actually apply.
    """

    weights: np.ndarray
    spectrum: np.ndarray
    effective: np.ndarray
    support: tuple = field(repr=False, default=())

    @property
    def shape(self):
        return self.weights.shape

    @property
    def nnz(self):
        return len(self.support[0]) if self.support else 0


def build_regularizer(m, n, min_weight=0.1, slope=3.0, grid=None, threshold=1e-8):
    """Quadratic penalty ``min + slope*(r/m)**2 + slope*(c/n)**2``.

    ``(r, c)`` are measured from the grid centre; the grid defaults to
    ``(m, n)``.  Spectrum coefficients below ``threshold`` times the largest
    magnitude are dropped.
    """
    if m <= 0 or n <= 0:
        raise ValueError("regulariser extent must be positive")
    if grid is None:
        grid = (int(m), int(n))
    h, w = grid
    r = np.arange(h) - h // 2
    c = np.arange(w) - w // 2
    weights = min_weight + slope * (r[:, None] / m) ** 2 + slope * (c[None, :] / n) ** 2
    spec = dft2(weights)
    keep = np.abs(spec) >= threshold * np.abs(spec).max()
    truncated = np.where(keep, spec, 0)
    return Regularizer(weights=weights, spectrum=truncated,
                       effective=idft2(truncated), support=np.nonzero(keep))


SPARSE_LIMIT = 32


def apply_regularizer(reg: Regularizer, spec, method="auto"):
    """Spectrum of ``gamma * w`` given the spectrum of ``w``.

    This is the circular convolution of ``spec`` with the truncated penalty
    spectrum; ``method="sparse"`` sums shifted copies over its support,
    ``"fft"`` multiplies in space.
    """
    spec = np.asarray(spec)
    if method == "auto":
        method = "sparse" if reg.nnz <= SPARSE_LIMIT else "fft"
    if method == "sparse":
        lam = spec.shape[0] * spec.shape[1]
        out = np.zeros_like(spec, dtype=complex)
        for i, j in zip(*reg.support):
            out += reg.spectrum[i, j] * np.roll(spec, (i, j), axis=(0, 1))
        return out / lam
    g = reg.effective if spec.ndim == 2 else reg.effective[:, :, None]
    return np.fft.fft2(g * np.fft.ifft2(spec, axes=(0, 1)), axes=(0, 1))


def regularizer_gram(reg: Regularizer, spec, method="auto"):
    """``Gamma^H Gamma`` applied to a spectrum (``Gamma`` is Hermitian)."""
    if method == "auto" and reg.nnz > SPARSE_LIMIT:
        g = reg.effective ** 2
        if np.ndim(spec) == 3:
            g = g[:, :, None]
        return np.fft.fft2(g * np.fft.ifft2(spec, axes=(0, 1)), axes=(0, 1))
    return apply_regularizer(reg, apply_regularizer(reg, spec, method), method)


@dataclass(frozen=True)
class StructuralFilter:
    """Per-layer filters on the common grid.

    Primal mode stores filter spectra ``(T, T, D_l)``.  Dual mode stores the
    dual coefficient spectra ``(T, T)`` together with the training features
    they were learned on, and the kernel.
    """

    layers: tuple
    mode: str = "primal"
    train_feats: Optional[tuple] = None
    kernel: object = None

    @classmethod
    def zeros(cls, feats, mode="primal", kernel=None):
        if mode == "primal":
            return cls(tuple(np.zeros_like(x, dtype=complex) for x in feats))
        return cls(tuple(np.zeros(x.shape[:2], dtype=complex) for x in feats),
                   mode="dual", train_feats=tuple(feats), kernel=kernel)


@dataclass(frozen=True)
class ConfidenceMap:
    """Score grid with its sub-cell refined peak (``(row, col)`` grid units)."""

    grid: np.ndarray
    peak: tuple
    peak_value: float

    @classmethod
    def from_grid(cls, grid):
        grid = np.asarray(grid, dtype=float)
        return cls(grid=grid, peak=refine_peak(grid), peak_value=float(grid.max()))


# least-squares fit of a + b x + c y + d x^2 + e x y + f y^2 over a 3x3 patch
_OFFS = np.array([(y, x) for y in (-1, 0, 1) for x in (-1, 0, 1)], dtype=float)
_DESIGN = np.column_stack([np.ones(9), _OFFS[:, 1], _OFFS[:, 0], _OFFS[:, 1] ** 2,
                           _OFFS[:, 1] * _OFFS[:, 0], _OFFS[:, 0] ** 2])
_FIT = np.linalg.pinv(_DESIGN)


def refine_peak(grid):
    """Quadratic sub-cell refinement around the argmax (circular neighbours)."""
    h, w = grid.shape
    r, c = np.unravel_index(np.argmax(grid), grid.shape)
    rows = (r + np.array([-1, 0, 1])) % h
    cols = (c + np.array([-1, 0, 1])) % w
    vals = grid[np.ix_(rows, cols)].ravel()
    _, b, cc, d, e, f = _FIT @ vals
    hess = np.array([[2 * d, e], [e, 2 * f]])
    dx = dy = 0.0
    if np.linalg.det(hess) > 1e-12 and d < 0:
        dx, dy = np.linalg.solve(hess, [-b, -cc])
    else:
        if d < 0:
            dx = -b / (2 * d)
        if f < 0:
            dy = -cc / (2 * f)
    dx = float(np.clip(dx, -0.5, 0.5))
    dy = float(np.clip(dy, -0.5, 0.5))
    return (r + dy, c + dx)


def score(filters: StructuralFilter, feats):
    """Per-layer confidence maps on the common grid."""
    if len(filters.layers) != len(feats):
        raise ValueError(f"{len(filters.layers)} filters for {len(feats)} feature layers")
    if filters.mode == "dual":
        from .optimizer import kernel_correlation, score_dual

        return [score_dual(kernel_correlation(tr, x, filters.kernel), a)
                for tr, x, a in zip(filters.train_feats, feats, filters.layers)]
    maps = []
    for w, x in zip(filters.layers, feats):
        s = circular_correlate(w, x)
        maps.append(idft2(pad_spectrum(s, w.shape[:2])))
    return maps
