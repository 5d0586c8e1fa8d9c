"""Feature extraction: handcrafted layers plus ingestion of external tensors."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .colornames import N_NAMES, extract_colornames
from .external import load_external, store_external
from .hog import extract_hog
from .sample import Patch, SampleConfig, crop_sample

__all__ = [
    "FeatureLayerSpec", "Patch", "SampleConfig", "crop_sample", "extract_gray",
    "extract_hog", "extract_colornames", "load_external", "store_external",
    "extract_stack", "normalize_channels",
]

CHANNELS = {"gray": 1, "hog": 31, "colornames": N_NAMES}


@dataclass(frozen=True)
class FeatureLayerSpec:
    """One feature layer.

    For ``kind="external"`` the tensor is read from ``path_template`` formatted
    with the sample context (``frame`` and ``scale`` keys), and ``channels`` is
    taken from the file header.
    """

    kind: str
    cell: int = 4
    path_template: Optional[str] = None

    def __post_init__(self):
        if self.kind not in (*CHANNELS, "external"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.cell < 1:
            raise ValueError("cell size must be >= 1")
        if self.kind == "external" and not self.path_template:
            raise ValueError("external layers need a path template")

    @property
    def channels(self):
        return CHANNELS.get(self.kind)


def extract_gray(patch, cell=4):
    """Cell-averaged luminance in [0, 1], minus its mean."""
    pixels = np.asarray(getattr(patch, "pixels", patch), dtype=float)
    if pixels.ndim == 3:
        lum = pixels @ np.array([0.299, 0.587, 0.114])
    else:
        lum = pixels
    lum = lum / 255.0
    h, w = lum.shape
    hc, wc = h // cell, w // cell
    top, left = (h - hc * cell) // 2, (w - wc * cell) // 2
    lum = lum[top:top + hc * cell, left:left + wc * cell]
    cells = lum.reshape(hc, cell, wc, cell).mean(axis=(1, 3))
    return (cells - cells.mean())[:, :, None]


def normalize_channels(fmap):
    """Scale every channel to unit mean square; all-zero channels stay zero."""
    fmap = np.asarray(fmap, dtype=float)
    ms = (fmap ** 2).mean(axis=(0, 1))
    scale = np.where(ms > 1e-20, 1.0 / np.sqrt(np.maximum(ms, 1e-300)), 0.0)
    return fmap * scale


def extract_layer(patch, spec: FeatureLayerSpec, table=None, context=None):
    if spec.kind == "gray":
        return extract_gray(patch, spec.cell)
    if spec.kind == "hog":
        return extract_hog(patch, spec.cell)
    if spec.kind == "colornames":
        return extract_colornames(patch, spec.cell, table)
    path = spec.path_template.format(**(context or {}))
    return load_external(path).astype(float)


def extract_stack(patch, specs, table=None, normalize=True, context=None):
    """Extract every layer in ``specs`` order, at its own resolution."""
    if len(specs) < 2:
        raise ValueError("a feature stack needs at least two layers")
    layers = []
    for spec in specs:
        fmap = extract_layer(patch, spec, table, context)
        if not np.all(np.isfinite(fmap)):
            raise ValueError(f"{spec.kind} layer produced non-finite values")
        layers.append(normalize_channels(fmap) if normalize else fmap)
    return layers
