"""One test per acceptance criterion; each records a PASS/FAIL line that the
terminal summary prints at the end of the run."""
import time

import numpy as np

from conftest import record
from oracles import brute_correlation, dense_normal_matrix, spline_sum_direct
from test_ensemble import project_simplex

from csot import bench
from csot.ensemble import fuse, kl_objective, normalize_map, pairwise_filter
from csot.operator import (LabelSpec, StructuralFilter, build_regularizer,
                           gaussian_label_spectrum, score)
from csot.optimizer import (KernelSpec, SolverConfig, kernel_correlation, score_dual, solve_dual,
                            solve_filters_cg, solve_filters_closed, update_slack)
from csot.spectral import circular_correlate, dft2, idft2, interpolate
from csot.tracker import TrackerConfig, _Extractor, _native_grid
from csot.features import crop_sample


def test_spectral_oracle():
    rng = np.random.default_rng(100)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        w = rng.standard_normal((8, 8, 3))
        x = rng.standard_normal((8, 8, 3))
        got = idft2(circular_correlate(dft2(w), dft2(x)))
        ref = brute_correlation(w, x)
        worst = max(worst, np.abs(got - ref).max() / np.abs(ref).max())
    secs = time.perf_counter() - t0
    ok = worst <= 1e-8 and secs < 5
    assert record("spectral oracle", ok, f"max rel err {worst:.2e}, {secs:.2f} s"), worst


def test_interpolation_oracle():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        x = rng.standard_normal((6, 6))
        got = idft2(interpolate(x, 24))[:, :, 0]
        worst = max(worst, np.abs(got - spline_sum_direct(x, (24, 24))).max())
    secs = time.perf_counter() - t0
    ok = worst <= 1e-8 and secs < 5
    assert record("interpolation oracle", ok, f"max abs err {worst:.2e}, {secs:.2f} s"), secs


def test_slack_oracle():
    rng = np.random.default_rng(102)
    mismatches = 0
    for _ in range(100):
        s = rng.standard_normal(64).reshape(8, 8)
        j = rng.random((8, 8))
        eps = update_slack(s, j)
        target = s[0, 0] - s - j
        # every element separately: minimise (e - target)^2 over the feasible e >= 0,
        # scanning the two candidate stationary points
        brute = np.empty_like(s)
        for idx in np.ndindex(s.shape):
            cands = [0.0] + ([target[idx]] if target[idx] >= 0 else [])
            brute[idx] = min(cands, key=lambda e: (e - target[idx]) ** 2)
        mismatches += int(np.count_nonzero(eps != brute))
    assert record("slack oracle", mismatches == 0,
                  f"{mismatches} mismatching elements over 100 x 64"), mismatches


def test_solver_oracle():
    rng = np.random.default_rng(103)
    worst_dense, worst_closed = 0.0, 0.0
    for _ in range(10):
        x = dft2(rng.standard_normal((8, 8, 2)))
        rho = dft2(rng.standard_normal((8, 8)))
        reg = build_regularizer(3, 3, grid=(8, 8))
        C = 0.1
        a = dense_normal_matrix(x, reg.effective, C)
        ref = np.linalg.solve(a, (x * np.conj(rho)[:, :, None]).ravel()).reshape(x.shape)
        got = solve_filters_cg(x, rho, reg, SolverConfig(C=C, tolerance=1e-15),
                               iterations=400).solution
        worst_dense = max(worst_dense, np.abs(got - ref).max() / np.abs(ref).max())

        ref = solve_filters_closed(x, rho, C)
        got = solve_filters_cg(x, rho, None, SolverConfig(C=C, tolerance=1e-15),
                               iterations=400).solution
        worst_closed = max(worst_closed, np.abs(got - ref).max() / np.abs(ref).max())
    ok = worst_dense <= 1e-6 and worst_closed <= 1e-5
    assert record("solver oracle", ok, f"dense {worst_dense:.2e}, identity penalty vs closed form "
                                       f"{worst_closed:.2e}")


def test_convergence(trained):
    obj = np.array(trained.trace.objective)
    res = trained.trace.residual
    increases = int(np.count_nonzero(np.diff(obj) > 0))
    ok = len(obj) == 25 and res[-1] < 1e-2 and increases == 0
    assert record("convergence", ok, f"final residual {res[-1]:.2e}, objective {obj[0]:.4g} -> "
                                     f"{obj[-1]:.4g}, {increases} increases in 25 iterations")


def test_fusion_optimality():
    rng = np.random.default_rng(104)
    worst_gap = np.inf
    for _ in range(10):
        layers = [normalize_map(rng.standard_normal((8, 8)) + 2 * rng.random((8, 8)) ** 4)
                  for _ in range(3)]
        maps = pairwise_filter(layers)
        r = fuse(maps, 3).grid
        r = r / r.sum()
        base = kl_objective(maps, r)
        for i in range(1000):
            if i % 2:
                cand = project_simplex(r + rng.normal(0, 10 ** rng.uniform(-5, -2), r.shape))
            else:
                t = 10 ** rng.uniform(-6, -1)
                cand = (1 - t) * r + t * rng.dirichlet(np.ones(r.size)).reshape(r.shape)
            worst_gap = min(worst_gap, kl_objective(maps, cand) - base)
        mass = sum(maps)
        for start in (r, np.full_like(r, 1.0 / r.size)):
            q = start.copy()
            for _ in range(100):
                grad = -np.divide(mass, q, out=np.zeros_like(q), where=mass > 0)
                q = np.clip(project_simplex(q - 1e-3 * grad / mass.sum()), 1e-15, None)
                q /= q.sum()
            worst_gap = min(worst_gap, kl_objective(maps, q) - base)
    ok = worst_gap >= -1e-9
    assert record("fusion optimality", ok, f"smallest objective gain over the fused map "
                                           f"{worst_gap:.2e} (must be >= -1e-9)")


def test_primal_dual_equivalence(first_frame):
    frames, gt = first_frame
    cfg = TrackerConfig()
    x, y, w, h = gt[0]
    center = (x + w / 2, y + h / 2)
    ext = _Extractor(cfg)
    train = crop_sample(frames[0], center, (w, h), 1.0, cfg.sample)
    raw = ext.raw(train, {"frame": 1, "scale": "train"})
    grid = _native_grid(raw)
    feats = [interpolate(f, grid) for f in raw]
    test = crop_sample(frames[1], center, (w, h), 1.0, cfg.sample, out_side=train.width)
    probes = ext(test, grid)
    rho = gaussian_label_spectrum(LabelSpec(), grid)
    lin = KernelSpec("linear")
    C = 1e-3
    worst = 0.0
    for xf, zf in zip(feats, probes):
        primal = score(StructuralFilter((solve_filters_closed(xf, rho, C),)), [zf])[0]
        alpha = solve_dual(kernel_correlation(xf, xf, lin), rho, C)
        dual = score_dual(kernel_correlation(xf, zf, lin), alpha)
        worst = max(worst, np.abs(primal - dual).max() / np.abs(primal).max())
    assert record("primal-dual equivalence", worst <= 1e-5, f"max rel err {worst:.2e}")


def test_end_to_end_tracking(drift_run):
    run = drift_run
    err = bench.center_errors(run.traj, run.gt)
    ious = bench.iou(run.traj, run.gt)
    auc, _ = bench.success_auc(run.traj, run.gt)
    frac = float(np.mean(ious > 0.5))
    ok = err.mean() <= 4.0 and frac >= 0.95 and auc >= 0.60 and run.seconds < 600
    assert record("end-to-end tracking", ok,
                  f"mean centre error {err.mean():.2f} px, IoU>0.5 on {100 * frac:.0f}% of "
                  f"frames, AUC {auc:.3f}, {run.seconds:.0f} s for {len(run.traj)} frames")


def test_metrics_identity():
    rng = np.random.default_rng(105)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(20, 200))
        gt = np.column_stack([rng.uniform(0, 300, (n, 2)), rng.uniform(5, 80, (n, 2))])
        traj = gt.copy()
        traj[:, :2] += rng.normal(0, rng.uniform(1, 30), (n, 2))
        traj[:, 2:] *= rng.uniform(0.5, 1.5, (n, 2))
        auc, _ = bench.success_auc(traj, gt)
        worst = max(worst, abs(auc - np.mean(bench.iou(traj, gt))))
    assert record("metrics identity", worst <= 0.01, f"max |AUC - mean IoU| {worst:.4f}")
