"""Online tracking: initialisation, scale-pyramid detection and model update."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .ensemble import fuse_layers
from .features import FeatureLayerSpec, SampleConfig, crop_sample, extract_stack
from .features.colornames import load_table
from .operator import (ConfidenceMap, LabelSpec, Regularizer, StructuralFilter,
                       build_regularizer, cost_map, score)
from .optimizer import KernelSpec, SolverConfig, TrainingContext, collaborative_optimize
from .spectral import band_size, interpolate

log = logging.getLogger(__name__)

HC_LAYERS = (FeatureLayerSpec("gray", 4), FeatureLayerSpec("hog", 4),
             FeatureLayerSpec("colornames", 4))


class TrackingError(RuntimeError):
    def __init__(self, frame_index, cause):
        super().__init__(f"frame {frame_index}: {cause}")
        self.frame_index = frame_index


@dataclass(frozen=True)
class TrackerConfig:
    layers: tuple = HC_LAYERS
    solver: SolverConfig = SolverConfig()
    label: LabelSpec = LabelSpec()
    scale_layers: int = 10
    scale_factor: float = 1.03
    symmetric_scales: bool = False
    sample: SampleConfig = SampleConfig()
    kernel: Optional[KernelSpec] = None
    reg_min: float = 0.1
    reg_slope: float = 3.0
    use_regularizer: bool = True
    window: bool = True
    normalize_features: bool = True
    fusion: str = "minshift"
    colornames_table: Optional[str] = None

    def __post_init__(self):
        if self.scale_layers < 1:
            raise ValueError("scale_layers must be >= 1")
        if self.scale_factor <= 1:
            raise ValueError("scale_factor must exceed 1")
        if self.sample.search_area_factor <= 1:
            raise ValueError("search_area_factor must exceed 1")
        if len(self.layers) < 2:
            raise ValueError("at least two feature layers are required")


@dataclass(frozen=True)
class TrackerState:
    position: tuple
    size: tuple
    filters: StructuralFilter
    regularizer: Optional[Regularizer]
    frame_index: int
    config: TrackerConfig
    grid: int
    patch_side: int
    cost: np.ndarray = field(repr=False)
    train_feats: tuple = field(repr=False, default=())
    last_map: Optional[ConfidenceMap] = field(repr=False, default=None)
    frame_shape: tuple = ()
    trace: object = field(repr=False, default=None)

    @property
    def bbox(self):
        (cx, cy), (w, h) = self.position, self.size
        return (cx - w / 2, cy - h / 2, w, h)


def preset(name, **overrides):
    """Named configurations: ``hc``, ``khc`` and ``external``.

    ``external`` needs ``layers`` (external layer specs) in ``overrides``.
    """
    if name == "khc":
        overrides = {"kernel": KernelSpec("gaussian", 0.2),
                     "solver": SolverConfig(learning_rate=0.05), **overrides}
    elif name == "external":
        layers = overrides.get("layers", ())
        if len(layers) < 2 or any(l.kind != "external" for l in layers):
            raise ValueError("the external preset needs at least two external layers")
    elif name != "hc":
        raise ValueError(f"unknown preset {name!r}")
    return TrackerConfig(**overrides)


def scale_exponents(n, symmetric=False):
    if symmetric:
        return np.arange(n) - (n - 1) / 2.0
    return np.arange(math.floor(-(n - 1) / 2), math.floor((n - 1) / 2) + 1, dtype=float)


def scale_factors(n, a, symmetric=False):
    """Scale pyramid ``a**tau``; the default index set is the floor-based one."""
    if n < 1 or a <= 1:
        raise ValueError("need n >= 1 and a > 1")
    return a ** scale_exponents(n, symmetric)


def _hann(n):
    return np.hanning(n + 2)[1:-1]


class _Extractor:
    """Turns a patch into interpolated spectra on the common grid."""

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        self.table = None
        if any(l.kind == "colornames" for l in cfg.layers):
            self.table = load_table(cfg.colornames_table)

    def raw(self, patch, context=None):
        layers = extract_stack(patch, self.cfg.layers, self.table,
                               self.cfg.normalize_features, context)
        if self.cfg.window:
            layers = [f * np.outer(_hann(f.shape[0]), _hann(f.shape[1]))[:, :, None]
                      for f in layers]
        return layers

    def __call__(self, patch, grid, context=None):
        return [interpolate(f, grid) for f in self.raw(patch, context)]


def _native_grid(layers):
    # finest layer decides; coarser ones are zero-padded in frequency
    return max(band_size(max(f.shape[:2])) for f in layers)


def _wrap(v, n):
    return (v + n / 2.0) % n - n / 2.0


def _clamp_position(pos, frame_shape):
    h, w = frame_shape[:2]
    return (float(np.clip(pos[0], 0, w)), float(np.clip(pos[1], 0, h)))


def init(frame, bbox, cfg: TrackerConfig = TrackerConfig()):
    """Train the filters on the first frame."""
    frame = np.asarray(frame)
    x, y, w, h = map(float, bbox)
    if w <= 0 or h <= 0:
        raise ValueError(f"degenerate bounding box {bbox}")
    fh, fw = frame.shape[:2]
    if x + w <= 0 or y + h <= 0 or x >= fw or y >= fh:
        raise ValueError(f"bounding box {bbox} lies outside the frame")
    position = (x + w / 2, y + h / 2)
    size = (w, h)
    probe = crop_sample(frame, position, size, 1.0, cfg.sample)
    patch_side = probe.width
    extractor = _Extractor(cfg)
    raw = extractor.raw(probe, {"frame": 1, "scale": "train"})
    grid = _native_grid(raw)

    raw_side = cfg.sample.search_area_factor * math.sqrt(w * h)
    reg = None
    if cfg.use_regularizer:
        reg = build_regularizer(h / raw_side * grid, w / raw_side * grid,
                                cfg.reg_min, cfg.reg_slope, grid=(grid, grid))
    cost = cost_map(cfg.label, grid)
    state = TrackerState(position=position, size=size, filters=None, regularizer=reg,
                         frame_index=0, config=cfg, grid=grid, patch_side=patch_side,
                         cost=cost, frame_shape=frame.shape)
    feats = tuple(interpolate(f, grid) for f in raw)
    return _train(state, feats, cfg.solver.init_outer_iterations, warm=None, frame_index=1)


def _train(state, feats, n_outer, warm, frame_index):
    cfg = state.config
    eta = cfg.solver.learning_rate
    if state.train_feats and eta < 1:
        feats = tuple((1 - eta) * old + eta * new for old, new in zip(state.train_feats, feats))
    mode = "dual" if cfg.kernel is not None else "primal"
    ctx = TrainingContext(feats=feats, cost=state.cost, reg=state.regularizer,
                          mode=mode, kernel=cfg.kernel)
    filters, trace = collaborative_optimize(ctx, cfg.solver, warm=warm, outer_iterations=n_outer)
    return replace(state, filters=filters, train_feats=feats, frame_index=frame_index,
                   trace=trace)


def detect(state: TrackerState, frame):
    """Search the scale pyramid around the previous position.

    Returns ``(position, scale_index, fused_map)``.  The state is not touched.
    """
    cfg = state.config
    frame = np.asarray(frame)
    extractor = _Extractor(cfg)
    factors = scale_factors(cfg.scale_layers, cfg.scale_factor, cfg.symmetric_scales)
    best = None
    for idx, a in enumerate(factors):
        patch = crop_sample(frame, state.position, state.size, a, cfg.sample,
                            out_side=state.patch_side)
        feats = extractor(patch, state.grid, {"frame": state.frame_index + 1, "scale": idx})
        fused = fuse_layers(score(state.filters, feats), cfg.fusion)
        if best is None or fused.peak_value > best[2].peak_value:
            best = (idx, patch, fused)
    idx, patch, fused = best
    t = state.grid
    dy, dx = (_wrap(v, t) for v in fused.peak)
    cell = patch.width / t * patch.scale
    position = (state.position[0] + dx * cell, state.position[1] + dy * cell)
    return _clamp_position(position, frame.shape), idx, fused


def update(state: TrackerState, frame, position, scale_index):
    """Re-train on a sample centred at ``position``; returns a new state."""
    cfg = state.config
    factors = scale_factors(cfg.scale_layers, cfg.scale_factor, cfg.symmetric_scales)
    a = factors[scale_index]
    size = (state.size[0] * a, state.size[1] * a)
    patch = crop_sample(frame, position, size, 1.0, cfg.sample, out_side=state.patch_side)
    feats = tuple(_Extractor(cfg)(patch, state.grid,
                                  {"frame": state.frame_index + 1, "scale": "train"}))
    moved = replace(state, position=tuple(position), size=size)
    return _train(moved, feats, cfg.solver.outer_iterations, warm=state.filters,
                  frame_index=state.frame_index + 1)


def step(state, frame):
    position, idx, fused = detect(state, frame)
    new = update(state, frame, position, idx)
    return replace(new, last_map=fused)


def track_sequence(frames, init_bbox, cfg: TrackerConfig = TrackerConfig(), progress=None):
    """Run the tracker over ``frames``; one ``(x, y, w, h)`` box per frame."""
    frames = iter(frames)
    try:
        first = next(frames)
    except StopIteration:
        raise ValueError("empty frame sequence") from None
    try:
        state = init(first, init_bbox, cfg)
    except Exception as exc:
        raise TrackingError(1, exc) from exc
    boxes = [tuple(map(float, init_bbox))]
    for i, frame in enumerate(frames, start=2):
        try:
            state = step(state, frame)
        except Exception as exc:
            raise TrackingError(i, exc) from exc
        boxes.append(state.bbox)
        if progress is not None:
            progress(i, state)
    return np.array(boxes)
