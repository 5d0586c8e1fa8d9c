"""Cropping of scaled search and training samples."""
from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np


class SampleError(ValueError):
    pass


@dataclass(frozen=True)
class SampleConfig:
    search_area_factor: float = 5.0
    clamp: tuple = (200, 300)
    multiple: int = 4


@dataclass(frozen=True)
class Patch:
    """A resized crop of a frame.

    ``scale`` is frame pixels per patch pixel; a displacement ``d`` measured in
    the patch maps to ``d * scale`` in the frame.
    """

    pixels: np.ndarray
    center: tuple
    scale: float

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


def search_side(target_size, scale=1.0, factor=5.0):
    """Side of the square search region covering ``factor**2`` target areas."""
    w, h = target_size
    if w <= 0 or h <= 0:
        raise SampleError(f"degenerate target size {target_size}")
    return factor * np.sqrt(w * h) * scale


def output_side(raw_side, cfg: SampleConfig):
    """Clamp the crop side into ``cfg.clamp`` and round to ``cfg.multiple``."""
    lo, hi = cfg.clamp
    side = min(max(raw_side, lo), hi)
    m = cfg.multiple
    return int(max(m, m * round(side / m)))


def crop_sample(frame, center, target_size, scale=1.0, cfg: SampleConfig = SampleConfig(),
                out_side=None):
    """Crop a square region around ``center`` and resize it.

    The crop covers ``search_area_factor**2`` times the target area (times
    ``scale**2``).  Pixels outside the frame replicate the border.  Without an
    explicit ``out_side`` the side is clamped into ``cfg.clamp``.
    """
    frame = np.asarray(frame)
    if frame.size == 0:
        raise SampleError("empty frame")
    raw = search_side(target_size, scale, cfg.search_area_factor)
    side = out_side if out_side is not None else output_side(raw, cfg)
    cx, cy = center
    s = raw / side
    # pixel i covers [i, i+1); patch pixel j maps to frame index s*j + off
    off_x = cx - 0.5 - s * (side - 1) / 2.0
    off_y = cy - 0.5 - s * (side - 1) / 2.0
    m = np.array([[s, 0.0, off_x], [0.0, s, off_y]])
    if s > 1:
        # anti-alias before shrinking; warpAffine has no area interpolation
        sigma = 0.5 * np.sqrt(s * s - 1.0)
        if sigma > 0.3:
            frame = cv2.GaussianBlur(frame, (0, 0), sigma, borderType=cv2.BORDER_REPLICATE)
    pixels = cv2.warpAffine(frame, m, (side, side),
                            flags=cv2.INTER_LINEAR | cv2.WARP_INVERSE_MAP,
                            borderMode=cv2.BORDER_REPLICATE)
    return Patch(pixels=pixels, center=(float(cx), float(cy)), scale=float(s))
