"""Colour-attribute features from a binned RGB lookup table.

Table file layout: 32768 rows of 10 little-endian float32 values.  Row
``1024 * (r // 8) + 32 * (g // 8) + (b // 8)`` holds the probabilities of the
ten colour names for that RGB bin.
"""
from __future__ import annotations

from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

N_BINS = 32
N_NAMES = 10
ROWS = N_BINS ** 3
DEFAULT_TABLE = "colornames_w10.bin"

# prototype colours of the bundled table, in channel order
PROTOTYPES = {
    "black": (0, 0, 0),
    "blue": (0, 0, 255),
    "brown": (139, 69, 19),
    "gray": (128, 128, 128),
    "green": (0, 160, 0),
    "pink": (255, 160, 200),
    "purple": (128, 0, 160),
    "red": (220, 0, 0),
    "white": (255, 255, 255),
    "yellow": (255, 240, 0),
}


class ColorTableError(ValueError):
    pass


def make_default_table(width=40.0):
    """Soft assignment of every RGB bin centre to the prototype colours."""
    centres = np.arange(N_BINS) * 8 + 3.5
    r, g, b = np.meshgrid(centres, centres, centres, indexing="ij")
    rgb = np.stack([r.ravel(), g.ravel(), b.ravel()], axis=1)
    protos = np.array(list(PROTOTYPES.values()), dtype=float)
    d2 = ((rgb[:, None, :] - protos[None]) ** 2).sum(axis=2)
    logits = -d2 / (2 * width ** 2)
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    return (p / p.sum(axis=1, keepdims=True)).astype("<f4")


def write_table(table, path):
    table = np.asarray(table, dtype="<f4")
    if table.shape != (ROWS, N_NAMES):
        raise ColorTableError(f"table must be {ROWS}x{N_NAMES}, got {table.shape}")
    Path(path).write_bytes(table.tobytes())


def load_table(path=None):
    """Read a lookup table; ``None`` loads the bundled one."""
    if path is None:
        raw = resources.files("csot.data").joinpath(DEFAULT_TABLE).read_bytes()
    else:
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise ColorTableError(f"cannot read colour table {path}: {exc}") from exc
    if len(raw) != ROWS * N_NAMES * 4:
        raise ColorTableError(
            f"colour table has {len(raw)} bytes, expected {ROWS * N_NAMES * 4}")
    table = np.frombuffer(raw, dtype="<f4").reshape(ROWS, N_NAMES).astype(float)
    if not np.all(np.isfinite(table)) or np.abs(table.sum(axis=1) - 1).max() > 1e-4:
        raise ColorTableError("colour table rows must be finite probabilities")
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def default_table():
    return load_table()


def lookup(pixels, table):
    pixels = np.asarray(pixels)
    idx = ((pixels[..., 0].astype(np.int64) // 8) * 1024
           + (pixels[..., 1].astype(np.int64) // 8) * 32
           + pixels[..., 2].astype(np.int64) // 8)
    return table[idx]


def extract_colornames(patch, cell=4, table=None):
    """Cell-averaged colour-name probabilities, shape ``(H//cell, W//cell, 10)``."""
    if table is None:
        table = default_table()
    pixels = np.asarray(getattr(patch, "pixels", patch))
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError("colour names need an RGB patch")
    h, w = pixels.shape[:2]
    hc, wc = h // cell, w // cell
    top, left = (h - hc * cell) // 2, (w - wc * cell) // 2
    probs = lookup(pixels[top:top + hc * cell, left:left + wc * cell], table)
    return probs.reshape(hc, cell, wc, cell, N_NAMES).mean(axis=(1, 3))
