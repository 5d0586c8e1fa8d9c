"""Fusion of per-layer confidence maps by pairwise collaborative filtering.

The per-layer maps are turned into distributions, multiplied pairwise and
averaged.  For non-negative weighted maps ``T_j`` the average, renormalised,
is the minimiser of ``sum_j KL(T_j || R)`` over distributions ``R``.
"""
from itertools import combinations

import numpy as np

from .operator import ConfidenceMap


def normalize_map(grid, method="minshift"):
    """Turn a score grid into a probability map.

    ``minshift`` subtracts the minimum and divides by the sum (a constant map
    becomes uniform); ``softmax`` exponentiates first.
    """
    grid = np.asarray(getattr(grid, "grid", grid), dtype=float)
    if not np.all(np.isfinite(grid)):
        raise ValueError("confidence map has non-finite values")
    if method == "softmax":
        e = np.exp(grid - grid.max())
        return e / e.sum()
    if method != "minshift":
        raise ValueError(f"unknown normalisation {method!r}")
    shifted = grid - grid.min()
    total = shifted.sum()
    if total <= 0:
        return np.full_like(grid, 1.0 / grid.size)
    return shifted / total


def pairwise_filter(maps):
    """Element-wise products of every pair ``(m, n)``, ``m < n``, in order."""
    maps = [np.asarray(m, dtype=float) for m in maps]
    if len(maps) < 2:
        raise ValueError("pairwise filtering needs at least two maps")
    if any(m.shape != maps[0].shape for m in maps):
        raise ValueError("confidence maps must share one grid")
    return [a * b for a, b in combinations(maps, 2)]


def fuse(weighted, n_layers):
    """Average of the weighted maps, with its refined peak."""
    expected = n_layers * (n_layers - 1) // 2
    if len(weighted) != expected:
        raise ValueError(f"{len(weighted)} weighted maps for {n_layers} layers "
                         f"(expected {expected})")
    total = np.zeros_like(np.asarray(weighted[0], dtype=float))
    for m in weighted:
        total += m
    return ConfidenceMap.from_grid(total * (2.0 / (n_layers * (n_layers - 1))))


def fuse_layers(score_maps, method="minshift"):
    """Normalise, pair and fuse raw per-layer score maps."""
    probs = [normalize_map(s, method) for s in score_maps]
    return fuse(pairwise_filter(probs), len(probs))


def kl_objective(maps, candidate):
    """``sum_l sum_p S_l(p) log(S_l(p) / R(p))``; ``inf`` if R misses support."""
    r = np.asarray(getattr(candidate, "grid", candidate), dtype=float)
    total = 0.0
    for m in maps:
        m = np.asarray(m, dtype=float)
        pos = m > 0
        if np.any(r[pos] <= 0):
            return np.inf
        total += float(np.sum(m[pos] * np.log(m[pos] / r[pos])))
    return total
