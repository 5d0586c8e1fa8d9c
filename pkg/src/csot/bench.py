"""OTB-style evaluation and deterministic synthetic sequences.

Boxes are ``(x, y, w, h)`` in continuous 0-based pixel coordinates: pixel
``i`` covers ``[i, i + 1)`` and the box centre is ``(x + w/2, y + h/2)``.
Text files use the OTB convention of a 1-based origin.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

SUCCESS_THRESHOLDS = np.linspace(0.0, 1.0, 101)
PRECISION_THRESHOLDS = np.arange(0, 51, dtype=float)


class LengthMismatch(ValueError):
    pass


def _boxes(b):
    b = np.asarray(b, dtype=float)
    return b.reshape(-1, 4)


def iou(a, b):
    """Intersection over union of two boxes (or row-wise for arrays)."""
    a, b = _boxes(a), _boxes(b)
    x1 = np.maximum(a[:, 0], b[:, 0])
    y1 = np.maximum(a[:, 1], b[:, 1])
    x2 = np.minimum(a[:, 0] + a[:, 2], b[:, 0] + b[:, 2])
    y2 = np.minimum(a[:, 1] + a[:, 3], b[:, 1] + b[:, 3])
    # cap at the smaller side: x + w - x can round above w for tiny boxes
    iw = np.clip(x2 - x1, 0, np.minimum(a[:, 2], b[:, 2]))
    ih = np.clip(y2 - y1, 0, np.minimum(a[:, 3], b[:, 3]))
    inter = iw * ih
    union = a[:, 2] * a[:, 3] + b[:, 2] * b[:, 3] - inter
    out = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return float(out[0]) if out.size == 1 else out


def centers(boxes):
    b = _boxes(boxes)
    return b[:, :2] + b[:, 2:] / 2.0


def _check(traj, gt):
    traj, gt = _boxes(traj), _boxes(gt)
    if len(traj) != len(gt):
        raise LengthMismatch(f"trajectory has {len(traj)} boxes, ground truth {len(gt)}")
    return traj, gt


def center_errors(traj, gt):
    traj, gt = _check(traj, gt)
    return np.linalg.norm(centers(traj) - centers(gt), axis=1)


def distance_precision(traj, gt, threshold=20.0):
    """Fraction of frames whose centre error is strictly below ``threshold``."""
    return float(np.mean(center_errors(traj, gt) < threshold))


def overlap_precision(traj, gt, threshold=0.5):
    """Fraction of frames whose IoU strictly exceeds ``threshold``."""
    traj, gt = _check(traj, gt)
    return float(np.mean(np.atleast_1d(iou(traj, gt)) > threshold))


def success_auc(traj, gt):
    """Success curve over 101 IoU thresholds and its mean (the AUC)."""
    traj, gt = _check(traj, gt)
    ious = np.atleast_1d(iou(traj, gt))
    curve = (ious[None, :] > SUCCESS_THRESHOLDS[:, None]).mean(axis=1)
    return float(curve.mean()), np.column_stack([SUCCESS_THRESHOLDS, curve])


def precision_curve(traj, gt):
    err = center_errors(traj, gt)
    curve = (err[None, :] < PRECISION_THRESHOLDS[:, None]).mean(axis=1)
    return np.column_stack([PRECISION_THRESHOLDS, curve])


@dataclass
class MetricsReport:
    dp20: float
    op50: float
    auc: float
    success_curve: np.ndarray
    precision_curve: np.ndarray
    mean_fps: float = float("nan")
    mean_center_error: float = float("nan")
    mean_iou: float = float("nan")
    frames: int = 0

    def summary(self):
        return {
            "frames": self.frames,
            "dp20": self.dp20,
            "op50": self.op50,
            "auc": self.auc,
            "mean_iou": self.mean_iou,
            "mean_center_error": self.mean_center_error,
            "mean_fps": self.mean_fps,
        }


def evaluate(traj, gt, fps=float("nan")):
    traj, gt = _check(traj, gt)
    auc, curve = success_auc(traj, gt)
    return MetricsReport(
        dp20=distance_precision(traj, gt),
        op50=overlap_precision(traj, gt),
        auc=auc,
        success_curve=curve,
        precision_curve=precision_curve(traj, gt),
        mean_fps=fps,
        mean_center_error=float(center_errors(traj, gt).mean()),
        mean_iou=float(np.mean(np.atleast_1d(iou(traj, gt)))),
        frames=len(gt),
    )


# file formats

_SPLIT = re.compile(r"[,\t ]+")


def read_boxes(path):
    """Read one ``x,y,w,h`` box per line (1-based origin) as 0-based boxes."""
    rows = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p for p in _SPLIT.split(line) if p]
        if len(parts) != 4:
            raise ValueError(f"{path}:{n}: expected 4 values, got {len(parts)}")
        rows.append([float(p) for p in parts])
    boxes = np.array(rows, dtype=float).reshape(-1, 4)
    boxes[:, :2] -= 1.0
    return boxes


def format_boxes(boxes):
    b = _boxes(boxes).copy()
    b[:, :2] += 1.0
    return "".join(",".join(f"{v:.4f}".rstrip("0").rstrip(".") for v in row) + "\n"
                   for row in b)


def write_boxes(path, boxes):
    """Write boxes atomically (temporary file, then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(format_boxes(boxes))
    tmp.replace(path)


def write_report(report: MetricsReport, out_dir, figures=True):
    """Key-value summary, curve CSVs and (optionally) the two plots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
             for k, v in report.summary().items()]
    (out / "metrics.txt").write_text("\n".join(lines) + "\n")
    for name, curve in (("success", report.success_curve), ("precision", report.precision_curve)):
        body = "threshold,value\n" + "".join(f"{t:.6g},{v:.6g}\n" for t, v in curve)
        (out / f"{name}.csv").write_text(body)
    if figures:
        from .plotting import plot_precision, plot_success

        plot_success(report, out / "success.png")
        plot_precision(report, out / "precision.png")
    return out


# synthetic sequences

@dataclass(frozen=True)
class SynthSpec:
    """Textured target moving over a smooth background.

    ``box`` is the first-frame box, ``velocity`` the per-frame centre
    displacement ``(dx, dy)`` and ``scale_rate`` the per-frame size factor.
    """

    frames: int = 100
    frame_size: tuple = (480, 640)
    box: tuple = (120.0, 110.0, 40.0, 34.0)
    velocity: tuple = (2.0, 1.2)
    scale_rate: float = 1.0
    texture_cells: int = 6
    background_contrast: float = 0.25
    noise: float = 2.0

    def ground_truth(self):
        x, y, w, h = self.box
        c0 = np.array([x + w / 2, y + h / 2])
        t = np.arange(self.frames, dtype=float)
        c = c0 + t[:, None] * np.asarray(self.velocity, dtype=float)
        s = np.array([w, h]) * (self.scale_rate ** t)[:, None]
        return np.column_stack([c - s / 2, s])


def _texture(rng, cells, size=96):
    coarse = rng.uniform(0, 255, (cells, cells, 3)).astype(np.float32)
    tex = cv2.resize(coarse, (size, size), interpolation=cv2.INTER_CUBIC)
    fine = rng.normal(0, 30, (size // 4, size // 4, 3)).astype(np.float32)
    tex += cv2.resize(fine, (size, size), interpolation=cv2.INTER_NEAREST)
    return np.clip(tex, 0, 255)


def _background(rng, shape, contrast):
    h, w = shape
    base = rng.normal(0, 1, (h // 16 + 1, w // 16 + 1, 3)).astype(np.float32)
    smooth = cv2.resize(base, (w, h), interpolation=cv2.INTER_CUBIC)
    smooth = cv2.GaussianBlur(smooth, (0, 0), 6)
    smooth /= smooth.std() + 1e-9
    return np.clip(128 + 128 * contrast * smooth, 0, 255)


def render_frame(background, texture, box, rng=None, noise=0.0):
    x, y, w, h = box
    th, tw = texture.shape[:2]
    sx, sy = tw / w, th / h
    # texture coordinate of frame pixel i: (i + 0.5 - x) * sx - 0.5
    m = np.array([[sx, 0, (0.5 - x) * sx - 0.5], [0, sy, (0.5 - y) * sy - 0.5]])
    fh, fw = background.shape[:2]
    flags = cv2.INTER_LINEAR | cv2.WARP_INVERSE_MAP
    patch = cv2.warpAffine(texture, m, (fw, fh), flags=flags, borderMode=cv2.BORDER_REPLICATE)
    # coverage of each pixel by the box, for anti-aliased edges
    cols = np.clip(np.minimum(np.arange(1, fw + 1), x + w) - np.maximum(np.arange(fw), x), 0, 1)
    rows = np.clip(np.minimum(np.arange(1, fh + 1), y + h) - np.maximum(np.arange(fh), y), 0, 1)
    alpha = np.outer(rows, cols)[:, :, None].astype(np.float32)
    frame = background * (1 - alpha) + patch * alpha
    if noise > 0 and rng is not None:
        frame = frame + rng.normal(0, noise, frame.shape)
    return np.clip(np.rint(frame), 0, 255).astype(np.uint8)


def synth_sequence(spec: SynthSpec = SynthSpec(), seed=0):
    """Frames (RGB uint8) and exact ground-truth boxes; deterministic per seed."""
    if spec.frames < 1:
        raise ValueError("a sequence needs at least one frame")
    rng = np.random.default_rng(seed)
    texture = _texture(rng, spec.texture_cells)
    background = _background(rng, spec.frame_size, spec.background_contrast)
    gt = spec.ground_truth()
    frames = [render_frame(background, texture, box, rng, spec.noise) for box in gt]
    return frames, gt


def write_sequence(out_dir, frames, gt):
    out = Path(out_dir)
    (out / "img").mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(frames))))
    for i, f in enumerate(frames, 1):
        cv2.imwrite(str(out / "img" / f"{i:0{width}d}.png"), cv2.cvtColor(f, cv2.COLOR_RGB2BGR))
    write_boxes(out / "groundtruth_rect.txt", gt)
    return out


def read_frames(seq_dir):
    """Load a directory of numbered images (sorted by name) as RGB arrays."""
    seq_dir = Path(seq_dir)
    if (seq_dir / "img").is_dir():
        seq_dir = seq_dir / "img"
    paths = sorted(p for p in seq_dir.iterdir()
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"))
    frames = []
    for p in paths:
        img = cv2.imread(str(p), cv2.IMREAD_COLOR)
        if img is None:
            raise ValueError(f"cannot read image {p}")
        frames.append(cv2.cvtColor(img, cv2.COLOR_BGR2RGB))
    return frames
