"""Built-in oracle checks behind ``csot selftest``.

Each suite compares a library routine with a slow, independent computation
and reports pass/fail.  ``perturb=True`` swaps in a deliberately broken
correlation (conjugation dropped) so the harness itself can be checked.
"""
from __future__ import annotations

import time
from contextlib import contextmanager
from unittest import mock

import numpy as np

from . import spectral
from .ensemble import fuse, kl_objective, normalize_map, pairwise_filter
from .operator import StructuralFilter, score
from .optimizer import (KernelSpec, SolverConfig, kernel_correlation, score_dual, solve_dual,
                        solve_filters_cg, solve_filters_closed)


def brute_correlation(w, x):
    """``S(p) = sum_{q,d} w(q, d) x(q + p, d)`` by explicit shifting."""
    h, wd = w.shape[:2]
    out = np.zeros((h, wd))
    for dy in range(h):
        for dx in range(wd):
            out[dy, dx] = np.sum(w * np.roll(x, (-dy, -dx), axis=(0, 1)))
    return out


def suite_fft(rng):
    worst = 0.0
    for _ in range(20):
        w = rng.standard_normal((8, 8, 3))
        x = rng.standard_normal((8, 8, 3))
        got = spectral.idft2(spectral.circular_correlate(spectral.dft2(w), spectral.dft2(x)))
        ref = brute_correlation(w, x)
        worst = max(worst, np.abs(got - ref).max() / np.abs(ref).max())
    return worst < 1e-8, f"max relative error {worst:.2e}"


def suite_cg(rng):
    worst = 0.0
    for _ in range(5):
        x = spectral.dft2(rng.standard_normal((8, 8, 1)))
        rho = spectral.dft2(rng.standard_normal((8, 8)))
        closed = solve_filters_closed(x, rho, 1.0)
        res = solve_filters_cg(x, rho, None, SolverConfig(C=1.0, tolerance=1e-14),
                               iterations=64)
        worst = max(worst, np.abs(res.solution - closed).max() / np.abs(closed).max())
    return worst < 1e-5, f"max relative error {worst:.2e}"


def suite_kl(rng):
    ok, margin = True, np.inf
    for _ in range(3):
        layers = [normalize_map(rng.random((6, 6)) ** 3) for _ in range(3)]
        maps = pairwise_filter(layers)
        r = fuse(maps, 3).grid
        r = r / r.sum()
        base = kl_objective(maps, r)
        for _ in range(200):
            cand = np.clip(r + 0.05 * r * rng.standard_normal(r.shape), 1e-12, None)
            diff = kl_objective(maps, cand / cand.sum()) - base
            margin = min(margin, diff)
            ok &= diff >= -1e-9
    return ok, f"smallest perturbation gain {margin:.2e}"


def suite_dual(rng):
    x = spectral.dft2(rng.standard_normal((9, 9, 1)))
    z = spectral.dft2(rng.standard_normal((9, 9, 1)))
    rho = spectral.dft2(rng.standard_normal((9, 9)))
    lin = KernelSpec("linear")
    w = solve_filters_closed(x, rho, 50.0)
    primal = score(StructuralFilter((w,)), [z])[0]
    alpha = solve_dual(kernel_correlation(x, x, lin), rho, 50.0)
    dual = score_dual(kernel_correlation(x, z, lin), alpha)
    err = np.abs(primal - dual).max() / np.abs(primal).max()
    return err < 1e-5, f"max relative error {err:.2e}"


SUITES = (("fft-brute-force", suite_fft), ("cg-vs-closed-form", suite_cg),
          ("kl-optimality", suite_kl), ("primal-dual", suite_dual))


def _broken_correlate(filt, feat):
    prod = np.asarray(filt) * np.asarray(feat)
    return prod if prod.ndim == 2 else prod.sum(axis=2)


@contextmanager
def _perturbed(active):
    if not active:
        yield
        return
    with mock.patch.object(spectral, "circular_correlate", _broken_correlate):
        yield


def run_all(perturb=False, seed=0, out=print):
    """Run every suite; returns True iff all pass."""
    rng = np.random.default_rng(seed)
    passed = True
    with _perturbed(perturb):
        for name, fn in SUITES:
            t0 = time.perf_counter()
            try:
                ok, detail = fn(rng)
            except Exception as exc:  # a crash is a failure, not an abort
                ok, detail = False, f"raised {type(exc).__name__}: {exc}"
            passed &= bool(ok)
            out(f"{'PASS' if ok else 'FAIL'} {name}: {detail} "
                f"({time.perf_counter() - t0:.2f} s)")
    return passed
