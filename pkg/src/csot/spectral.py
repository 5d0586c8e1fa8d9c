"""Fourier-domain primitives shared by the filter operator and the solvers.

Conventions used throughout the package:

* Spatial maps are real arrays shaped ``(H, W)`` or ``(H, W, D)``.
* Spectra are complex arrays with the same shape, stored in numpy's standard
  (unshifted) FFT layout.  The centred index set of an axis of length ``K`` is
  ``-(K // 2) .. (K - 1) // 2``, which is what ``np.fft.fftshift`` produces.
* ``dft2`` is unnormalised and ``idft2`` carries the ``1 / (H * W)`` factor,
  so a spectrum always holds the DFT of the samples on its own grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SpectralError(ValueError):
    """Raised for invalid inputs to the Fourier primitives."""


SYMMETRY_TOL = 1e-9


def _check_finite(a, what):
    if not np.all(np.isfinite(a)):
        raise SpectralError(f"{what} contains non-finite values")


def dft2(x):
    """Unnormalised 2-D DFT over the first two axes (per channel)."""
    x = np.asarray(x)
    if x.ndim not in (2, 3) or x.shape[0] < 1 or x.shape[1] < 1:
        raise SpectralError(f"expected (H, W) or (H, W, D) map, got shape {x.shape}")
    _check_finite(x, "spatial map")
    return np.fft.fft2(x, axes=(0, 1))


def is_conjugate_symmetric(spec, tol=SYMMETRY_TOL):
    """True if ``spec[-k] == conj(spec[k])`` for every bin (relative to the peak)."""
    spec = np.asarray(spec)
    flipped = np.roll(spec[::-1, ::-1], 1, axis=(0, 1))
    scale = max(np.abs(spec).max(initial=0.0), 1.0)
    return bool(np.abs(flipped - np.conj(spec)).max(initial=0.0) <= tol * scale)


def hermitian_part(spec):
    """Spectrum of the real part of the signal behind ``spec``."""
    spec = np.asarray(spec)
    flipped = np.roll(spec[::-1, ::-1], 1, axis=(0, 1))
    return 0.5 * (spec + np.conj(flipped))


def idft2(spec, real=True):
    """Inverse of :func:`dft2`.

    With ``real=True`` the spectrum must be conjugate-symmetric (it came from a
    real signal); the imaginary round-off is then dropped.
    """
    spec = np.asarray(spec)
    if spec.ndim not in (2, 3):
        raise SpectralError(f"expected (H, W) or (H, W, D) spectrum, got shape {spec.shape}")
    _check_finite(spec, "spectrum")
    out = np.fft.ifft2(spec, axes=(0, 1))
    if not real:
        return out
    if not is_conjugate_symmetric(spec):
        raise SpectralError("spectrum flagged real-origin is not conjugate-symmetric")
    return out.real


def centered_freqs(n):
    """Integer frequencies of each bin of an ``n``-point DFT, in storage order."""
    return np.rint(np.fft.fftfreq(n) * n).astype(int)


def band_size(n):
    """Number of Fourier coefficients kept when interpolating ``n`` samples.

    The band is symmetric, ``|k| <= n // 2``, so even sizes keep both Nyquist
    bins and the interpolated function stays real.
    """
    return 2 * (n // 2) + 1


def _pad_axis(a, size, axis):
    n = a.shape[axis]
    if size == n:
        return a
    shifted = np.fft.fftshift(a, axes=axis)
    pad = [(0, 0)] * a.ndim
    lo = size // 2 - n // 2
    pad[axis] = (lo, size - n - lo)
    return np.fft.ifftshift(np.pad(shifted, pad), axes=axis)


def _crop_axis(a, size, axis):
    n = a.shape[axis]
    if size == n:
        return a
    shifted = np.fft.fftshift(a, axes=axis)
    lo = n // 2 - size // 2
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(lo, lo + size)
    return np.fft.ifftshift(shifted[tuple(idx)], axes=axis)


def _as_pair(size):
    if np.isscalar(size):
        return int(size), int(size)
    h, w = size
    return int(h), int(w)


def pad_spectrum(spec, size):
    """Centred zero-padding in frequency up to ``size`` bins per axis.

    Retained coefficients are copied unchanged, so an even-length input keeps
    its single Nyquist bin and the padded spectrum is no longer symmetric.
    """
    spec = np.asarray(spec)
    th, tw = _as_pair(size)
    if th < spec.shape[0] or tw < spec.shape[1]:
        raise SpectralError(
            f"cannot pad {spec.shape[:2]} spectrum down to {(th, tw)}")
    return _pad_axis(_pad_axis(spec, th, 0), tw, 1)


def crop_spectrum(spec, size):
    """Keep the centred ``size`` block of a spectrum (adjoint of padding)."""
    spec = np.asarray(spec)
    kh, kw = _as_pair(size)
    if kh > spec.shape[0] or kw > spec.shape[1]:
        raise SpectralError(f"cannot crop {spec.shape[:2]} spectrum to {(kh, kw)}")
    return _crop_axis(_crop_axis(spec, kh, 0), kw, 1)


def circular_correlate(filt, feat):
    """Channel-summed circular correlation in the Fourier domain.

    Returns the single-channel spectrum of
    ``S(p) = sum_d sum_q w_d(q) x_d(q + p)``, i.e. ``sum_d conj(W_d) * X_d``.
    """
    filt = np.asarray(filt)
    feat = np.asarray(feat)
    if filt.shape != feat.shape:
        raise SpectralError(f"shape mismatch: filter {filt.shape} vs features {feat.shape}")
    prod = np.conj(filt) * feat
    return prod if prod.ndim == 2 else prod.sum(axis=2)


@dataclass(frozen=True)
class InterpolationKernel:
    """Fourier coefficients of the periodic cubic-spline interpolation kernel.

    ``coefficients[j]`` belongs to frequency ``freqs[j]``; the frequencies run
    over the symmetric band ``-(samples // 2) .. samples // 2``.
    """

    samples: int
    period: float
    freqs: np.ndarray
    coefficients: np.ndarray

    def on_grid(self, n):
        """Coefficients laid out on an ``n``-bin DFT grid, zero outside the band."""
        if n < len(self.freqs):
            raise SpectralError(
                f"grid of {n} bins cannot hold a band of {len(self.freqs)} coefficients")
        out = np.zeros(n, dtype=complex)
        out[self.freqs % n] = self.coefficients
        return out


def cubic_bspline_ft(f):
    """Continuous Fourier transform of the centred cubic B-spline."""
    return np.sinc(f) ** 4


def spline_kernel(n, period=1.0):
    """Build the interpolation kernel for ``n`` samples over one period.

    ``b[k] = exp(-i pi k / n) * B(k / n) / n`` where ``B`` is the cubic
    B-spline transform; the phase places each spline half a cell to the right
    of its sample.
    """
    if n < 2:
        raise SpectralError(f"interpolation needs at least 2 samples, got {n}")
    if period <= 0:
        raise SpectralError("period must be positive")
    k = np.arange(-(n // 2), n // 2 + 1)
    coef = np.exp(-1j * np.pi * k / n) * cubic_bspline_ft(k / n) / n
    return InterpolationKernel(samples=n, period=float(period), freqs=k, coefficients=coef)


def identity_kernel(n):
    """Degenerate kernel that samples the map as is (``b[k] = 1 / n``)."""
    k = np.arange(-(n // 2), n // 2 + 1)
    return InterpolationKernel(samples=n, period=float(n), freqs=k,
                               coefficients=np.full(len(k), 1.0 / n, dtype=complex))


def interpolate(fmap, size, kernel=None):
    """Interpolate a discrete map to a continuous periodic function.

    Returns the DFT of that function sampled on a ``size`` grid, so
    ``idft2(interpolate(...))`` evaluates it at the grid points.  ``kernel`` is
    one :class:`InterpolationKernel` (square maps) or a ``(rows, cols)`` pair;
    cubic-spline kernels matching the map are built when omitted.
    """
    fmap = np.asarray(fmap, dtype=float)
    if fmap.ndim == 2:
        fmap = fmap[:, :, None]
    h, w = fmap.shape[:2]
    th, tw = _as_pair(size)
    if kernel is None:
        kh, kw = spline_kernel(h), spline_kernel(w)
    elif isinstance(kernel, InterpolationKernel):
        kh = kw = kernel
    else:
        kh, kw = kernel
    if kh.samples != h or kw.samples != w:
        raise SpectralError("kernel resolution does not match the feature map")
    if th < band_size(h) or tw < band_size(w):
        raise SpectralError(
            f"output grid {(th, tw)} is smaller than the {h}x{w} map's band "
            f"{(band_size(h), band_size(w))}")
    native = dft2(fmap)
    rows = native[kh.freqs % h]
    block = rows[:, kw.freqs % w]
    block = block * (th * tw) * np.multiply.outer(kh.coefficients, kw.coefficients)[:, :, None]
    out = np.zeros((th, tw, fmap.shape[2]), dtype=complex)
    out[np.ix_(kh.freqs % th, kw.freqs % tw)] = block
    return out
