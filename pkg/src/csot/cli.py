"""Command-line entry point: ``csot track|eval|synth|selftest``.

Configuration files are flat ``key=value`` lines; dotted prefixes select a
section (``solver.C=20000``, ``label.sigma=0.1``, ``sample.search_area_factor=5``,
``kernel.bandwidth=0.2``, ``features.layers=gray:4,hog:4,colornames:4``).
Keys without a prefix set top-level tracker fields (``scale_layers=10``) and
``run.*`` keys supply the flags (``run.seq``, ``run.out``, ...).  Command-line
flags win over the file.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path


from . import bench
from .features import FeatureLayerSpec, SampleConfig
from .operator import LabelSpec
from .optimizer import KernelSpec, SolverConfig
from .tracker import TrackerConfig, TrackingError, preset, track_sequence

log = logging.getLogger("csot")

EXIT_CONFIG = 2
EXIT_TRACKING = 3
EXIT_LENGTH = 4
EXIT_UNWRITABLE = 5

SECTIONS = {"solver": SolverConfig, "label": LabelSpec, "sample": SampleConfig,
            "kernel": KernelSpec}
RUN_KEYS = ("preset", "seq", "gt", "out", "seed", "frames", "init")
SYNTH_KEYS = {f.name for f in dataclasses.fields(bench.SynthSpec)}


class ConfigError(ValueError):
    pass


def _convert(raw, default, key):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if default is None:
            return raw or None
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for key {key!r}") from None


def parse_layers(text, external=""):
    """``gray:4,hog:4`` style layer list; ``external`` is a ``;``-separated list of templates."""
    specs = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        kind, _, cell = item.partition(":")
        specs.append(FeatureLayerSpec(kind, int(cell or 4)))
    for tmpl in filter(None, (t.strip() for t in external.split(";"))):
        cell, _, path = tmpl.partition(":") if tmpl.split(":", 1)[0].isdigit() else ("4", "", tmpl)
        specs.append(FeatureLayerSpec("external", int(cell), path))
    return tuple(specs)


def read_config(path):
    """Parse a config file into a ``{key: raw string}`` dict."""
    values = {}
    if path is None:
        return values
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected key=value, got {line!r}")
        values[key.strip()] = value.strip()
    return values


def build_config(values, preset_name=None):
    """TrackerConfig plus run options from raw config values."""
    values = dict(values)
    run = {k: values.pop(f"run.{k}") for k in RUN_KEYS if f"run.{k}" in values}
    synth = {k[len("synth."):]: values.pop(k) for k in list(values) if k.startswith("synth.")}
    name = preset_name or run.get("preset", "hc")
    sections = {s: {} for s in SECTIONS}
    top = {}
    layers = values.pop("features.layers", None)
    external = values.pop("features.external", "")
    table = values.pop("features.colornames_table", None)
    tracker_fields = {f.name: f for f in dataclasses.fields(TrackerConfig)}
    for key, raw in values.items():
        section, dot, field = key.partition(".")
        if dot and section in SECTIONS:
            cls = SECTIONS[section]
            defaults = {f.name: f.default for f in dataclasses.fields(cls)}
            if field not in defaults:
                raise ConfigError(f"unknown config key {key!r}")
            sections[section][field] = _convert(raw, defaults[field], key)
        elif not dot and key in tracker_fields and key not in ("layers", "solver", "label",
                                                                "sample", "kernel"):
            top[key] = _convert(raw, tracker_fields[key].default, key)
        else:
            raise ConfigError(f"unknown config key {key!r}")

    overrides = dict(top)
    if table is not None:
        overrides["colornames_table"] = table
    try:
        if layers is not None or external:
            overrides["layers"] = parse_layers(layers or "", external)
        if name == "khc":
            base_solver = SolverConfig(learning_rate=0.05)
            base_kernel = KernelSpec()
        else:
            base_solver, base_kernel = SolverConfig(), None
        if sections["solver"]:
            overrides["solver"] = dataclasses.replace(base_solver, **sections["solver"])
        elif name == "khc":
            overrides["solver"] = base_solver
        if sections["kernel"]:
            overrides["kernel"] = dataclasses.replace(base_kernel or KernelSpec(),
                                                      **sections["kernel"])
        elif base_kernel is not None:
            overrides["kernel"] = base_kernel
        if sections["label"]:
            overrides["label"] = LabelSpec(**sections["label"])
        if sections["sample"]:
            overrides["sample"] = SampleConfig(**sections["sample"])
        cfg = preset(name, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg, run, synth


def _merge_flags(run, args):
    for k in RUN_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            run[k] = v
    return run


def _ensure_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise PermissionError(f"output directory {out} is not writable: {exc}") from None
    return out


# commands

def cmd_track(args):
    cfg, run, _ = build_config(read_config(args.config), args.preset)
    run = _merge_flags(run, args)
    if "seq" not in run:
        raise ConfigError("track needs a sequence directory (--seq or run.seq)")
    seq = Path(run["seq"])
    frames = bench.read_frames(seq)
    if not frames:
        raise ConfigError(f"no frames found in {seq}")
    if run.get("init"):
        vals = _convert(run["init"], (), "init")
        if len(vals) != 4:
            raise ConfigError(f"initial box needs 4 values, got {run['init']!r}")
        # same 1-based origin as the box files
        init_box = (vals[0] - 1, vals[1] - 1, vals[2], vals[3])
    else:
        gt_path = run.get("gt") or (seq / "groundtruth_rect.txt")
        if not Path(gt_path).is_file():
            raise ConfigError("no initial box: give --init, --gt or a groundtruth_rect.txt "
                              "inside the sequence directory")
        init_box = bench.read_boxes(gt_path)[0]
    out = _ensure_dir(run.get("out") or ".")
    t0 = time.perf_counter()
    traj = track_sequence(frames, init_box, cfg)
    elapsed = time.perf_counter() - t0
    fps = len(frames) / elapsed if elapsed > 0 else float("inf")
    bench.write_boxes(out / "trajectory.txt", traj)
    (out / "timing.txt").write_text(f"frames={len(frames)}\nseconds={elapsed:.3f}\n"
                                    f"mean_fps={fps:.4f}\n")
    print(f"tracked {len(frames)} frames in {elapsed:.1f} s ({fps:.2f} fps) -> "
          f"{out / 'trajectory.txt'}")
    return 0


def cmd_eval(args):
    _, run, _ = build_config(read_config(args.config), args.preset)
    run = _merge_flags(run, args)
    traj_path = args.traj or (Path(run["out"]) / "trajectory.txt" if "out" in run else None)
    if traj_path is None or "gt" not in run:
        raise ConfigError("eval needs --traj (or --out holding trajectory.txt) and --gt")
    traj = bench.read_boxes(traj_path)
    gt = bench.read_boxes(run["gt"])
    fps = float("nan")
    timing = Path(traj_path).with_name("timing.txt")
    if timing.is_file():
        for line in timing.read_text().splitlines():
            if line.startswith("mean_fps="):
                fps = float(line.split("=", 1)[1])
    report = bench.evaluate(traj, gt, fps)
    out = _ensure_dir(run.get("out") or Path(traj_path).parent)
    bench.write_report(report, out, figures=not args.no_figures)
    for k, v in report.summary().items():
        print(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")
    return 0


def cmd_synth(args):
    _, run, synth = build_config(read_config(args.config), args.preset)
    run = _merge_flags(run, args)
    params = {}
    defaults = {f.name: f.default for f in dataclasses.fields(bench.SynthSpec)}
    for k, raw in synth.items():
        if k not in SYNTH_KEYS:
            raise ConfigError(f"unknown config key 'synth.{k}'")
        params[k] = _convert(raw, defaults[k], f"synth.{k}")
    if "frame_size" in params:
        params["frame_size"] = tuple(int(v) for v in params["frame_size"])
    if "frames" in run:
        params["frames"] = int(run["frames"])
    spec = bench.SynthSpec(**params)
    if spec.frames < 1:
        raise ConfigError("a synthetic sequence needs at least one frame")
    if "out" not in run:
        raise ConfigError("synth needs an output directory (--out)")
    out = _ensure_dir(run["out"])
    frames, gt = bench.synth_sequence(spec, int(run.get("seed", 0)))
    bench.write_sequence(out, frames, gt)
    print(f"wrote {len(frames)} frames to {out}")
    return 0


def cmd_selftest(args):
    from .selftest import run_all

    return 0 if run_all(perturb=args.perturb) else 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--preset", choices=("hc", "khc", "external"))
    common.add_argument("--seq", help="sequence directory (numbered images)")
    common.add_argument("--gt", help="ground-truth box file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--init", help="initial box x,y,w,h (1-based), instead of --gt")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="csot", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("track", parents=[common], help="run the tracker on a sequence")
    p = sub.add_parser("eval", parents=[common], help="score a trajectory against ground truth")
    p.add_argument("--traj", help="trajectory file (default: OUT/trajectory.txt)")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG plots")
    p = sub.add_parser("synth", parents=[common], help="render a synthetic sequence")
    p.add_argument("--frames", type=int)
    p = sub.add_parser("selftest", parents=[common], help="run the built-in oracle checks")
    p.add_argument("--perturb", action="store_true", help=argparse.SUPPRESS)
    return parser


COMMANDS = {"track": cmd_track, "eval": cmd_eval, "synth": cmd_synth, "selftest": cmd_selftest}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrackingError as exc:
        print(f"tracking failed at {exc}", file=sys.stderr)
        return EXIT_TRACKING
    except bench.LengthMismatch as exc:
        print(f"length mismatch: {exc}", file=sys.stderr)
        return EXIT_LENGTH
    except PermissionError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_UNWRITABLE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
