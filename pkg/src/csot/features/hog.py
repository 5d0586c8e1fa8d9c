"""31-channel HOG variant (Felzenszwalb et al. layout).

Channels 0-17 are contrast-sensitive orientation bins, 18-26 contrast-
insensitive bins and 27-30 the gradient energy of the four surrounding
2x2 blocks.
"""
import numpy as np

N_SENSITIVE = 18
N_INSENSITIVE = 9
TRUNCATION = 0.2
_EPS = 1e-4


def _gradients(img):
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = 0.5 * (img[:, 2:] - img[:, :-2])
    gx[:, 0] = img[:, 1] - img[:, 0]
    gx[:, -1] = img[:, -1] - img[:, -2]
    gy[1:-1] = 0.5 * (img[2:] - img[:-2])
    gy[0] = img[1] - img[0]
    gy[-1] = img[-1] - img[-2]
    if img.ndim == 3:
        # keep the colour channel with the strongest gradient
        mag2 = gx * gx + gy * gy
        best = mag2.argmax(axis=2)[..., None]
        gx = np.take_along_axis(gx, best, axis=2)[..., 0]
        gy = np.take_along_axis(gy, best, axis=2)[..., 0]
    return gx, gy


def _cell_histograms(gx, gy, cell):
    h, w = gx.shape
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), 2 * np.pi) * (N_SENSITIVE / (2 * np.pi))
    lo = np.floor(ang).astype(int) % N_SENSITIVE
    hi = (lo + 1) % N_SENSITIVE
    frac = ang - np.floor(ang)
    hist = np.zeros((h, w, N_SENSITIVE))
    rows, cols = np.indices((h, w))
    np.add.at(hist, (rows, cols, lo), mag * (1 - frac))
    np.add.at(hist, (rows, cols, hi), mag * frac)
    hc, wc = h // cell, w // cell
    return hist.reshape(hc, cell, wc, cell, N_SENSITIVE).sum(axis=(1, 3))


def extract_hog(patch, cell=4):
    """Compute the 31-channel HOG map of ``patch`` at ``cell`` pixels per cell."""
    pixels = np.asarray(getattr(patch, "pixels", patch), dtype=float) / 255.0
    h, w = pixels.shape[:2]
    if h < 3 * cell or w < 3 * cell:
        raise ValueError(f"patch {h}x{w} too small for HOG cell {cell}")
    hc, wc = h // cell, w // cell
    top, left = (h - hc * cell) // 2, (w - wc * cell) // 2
    pixels = pixels[top:top + hc * cell, left:left + wc * cell]

    gx, gy = _gradients(pixels)
    sens = _cell_histograms(gx, gy, cell) / (cell * cell)
    insens = sens[:, :, :N_INSENSITIVE] + sens[:, :, N_INSENSITIVE:]
    energy = np.pad((insens ** 2).sum(axis=2), 1, mode="edge")

    out = np.zeros((hc, wc, 31))
    for i, (dy, dx) in enumerate(((-1, -1), (-1, 1), (1, -1), (1, 1))):
        ys = slice(1 + min(dy, 0), 1 + min(dy, 0) + hc)
        xs = slice(1 + min(dx, 0), 1 + min(dx, 0) + wc)
        ys2 = slice(ys.start + 1, ys.stop + 1)
        xs2 = slice(xs.start + 1, xs.stop + 1)
        block = energy[ys, xs] + energy[ys2, xs] + energy[ys, xs2] + energy[ys2, xs2]
        norm = 1.0 / np.sqrt(block + _EPS)
        s = np.minimum(sens * norm[..., None], TRUNCATION)
        t = np.minimum(insens * norm[..., None], TRUNCATION)
        out[:, :, :N_SENSITIVE] += 0.5 * s
        out[:, :, N_SENSITIVE:27] += 0.5 * t
        out[:, :, 27 + i] = 0.2357 * s.sum(axis=2)
    return out
