"""Online collaborative optimisation of the structural filters.

Each outer iteration scores the training sample with the current filters,
updates the non-negative slack in closed form, turns it into confidence
labels and runs a few warm-started conjugate-gradient steps on the filter
normal equations.

Sign conventions (see ``spectral``): scores are ``S = sum_d conj(W_d) X_d``,
so the normal equations for the filter spectra read

    (X X^H + Gamma^H Gamma / C) W = X conj(rho)

per frequency, where ``Gamma`` is the spectral form of the spatial penalty.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .operator import Regularizer, StructuralFilter, regularizer_gram, score
from .spectral import band_size, crop_spectrum, dft2, hermitian_part, idft2, pad_spectrum

log = logging.getLogger(__name__)


class SolverDivergence(FloatingPointError):
    def __init__(self, iteration, msg="non-finite value in conjugate gradient"):
        super().__init__(f"{msg} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class SolverConfig:
    C: float = 20000.0
    outer_iterations: int = 3
    cg_iterations: int = 2
    init_outer_iterations: int = 25
    tolerance: float = 1e-8
    preconditioner: bool = False
    # weight of the newest sample in the training features; 1.0 = current frame only
    learning_rate: float = 1.0
    # C weighs the data term of the objective written in Fourier-series
    # coefficients; on unnormalised DFT spectra that is C / (grid points)**2
    series_weight: bool = True

    def effective_C(self, grid):
        if not self.series_weight:
            return self.C
        lam = float(np.prod(grid[:2]))
        return self.C / lam ** 2

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if min(self.cg_iterations, self.init_outer_iterations) < 1 or self.outer_iterations < 0:
            raise ValueError("iteration counts must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel for the dual path.

    With ``normalize`` the squared distance is divided by the number of
    feature elements before applying the Gaussian bandwidth.
    """

    kind: str = "gaussian"
    bandwidth: float = 0.2
    normalize: bool = True

    def __post_init__(self):
        if self.kind not in ("gaussian", "linear"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "gaussian" and self.bandwidth <= 0:
            raise ValueError("kernel bandwidth must be positive")


# slack and labels

def update_slack(score_map, cost, anchor=(0, 0)):
    """Closed-form slack ``max(0, S(y0) - S - J)``."""
    score_map = np.asarray(score_map, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if score_map.shape != cost.shape:
        raise ValueError("score and cost grids differ")
    return np.maximum(0.0, score_map[anchor] - score_map - cost)


def confidence_labels(score_map, cost, slack, anchor=(0, 0)):
    """Labels ``rho = S(y0) - J - eps`` and their spectrum."""
    rho = np.asarray(score_map)[anchor] - np.asarray(cost) - np.asarray(slack)
    return rho, dft2(rho)


# primal solvers

@dataclass
class CGResult:
    solution: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)

    @property
    def relative_residual(self):
        return self.residuals[-1] if self.residuals else 0.0


def conjugate_gradient(apply_a, b, x0, iterations, tol=0.0, precond=None):
    """Preconditioned CG for a Hermitian positive definite operator.

    ``residuals`` holds the relative residual after each step (entry 0 is
    the starting point).
    """
    bnorm = np.linalg.norm(b)
    if not np.isfinite(bnorm):
        raise SolverDivergence(0, "non-finite right-hand side in conjugate gradient")
    x = x0.copy()
    if bnorm == 0 and not np.any(x):
        return CGResult(x, 0, [0.0])
    r = b - apply_a(x)
    scale = bnorm if bnorm > 0 else 1.0
    residuals = [np.linalg.norm(r) / scale]
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = np.vdot(r, z).real
    done = 0
    for it in range(1, iterations + 1):
        if residuals[-1] <= tol:
            break
        ap = apply_a(p)
        denom = np.vdot(p, ap).real
        if not np.isfinite(denom):
            raise SolverDivergence(it)
        if denom <= 0:
            break
        alpha = rz / denom
        x = x + alpha * p
        r = r - alpha * ap
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(r))):
            raise SolverDivergence(it)
        residuals.append(np.linalg.norm(r) / scale)
        done = it
        z = precond(r) if precond is not None else r
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    return CGResult(x, done, residuals)


def feature_band(x):
    """Centred block of a spectrum holding all of its non-zero coefficients."""
    t_h, t_w = x.shape[:2]
    nz = np.abs(x).reshape(t_h, t_w, -1).max(axis=2) > 0
    kh = _extent(nz.any(axis=1), t_h)
    kw = _extent(nz.any(axis=0), t_w)
    return kh, kw


def _extent(mask, n):
    k = np.rint(np.fft.fftfreq(n) * n).astype(int)
    if not mask.any():
        return band_size(1)
    reach = np.abs(k[mask]).max()
    return min(2 * reach + 1, n)


def anchor_phase(grid, anchor):
    """``e[k]`` with ``q(anchor) = sum_k q_hat[k] e[k] / (grid points)``."""
    h, w = grid
    ky = np.fft.fftfreq(h)[:, None] * anchor[0]
    kx = np.fft.fftfreq(w)[None, :] * anchor[1]
    return np.exp(2j * np.pi * (ky + kx))


def _anchor_gram(q, phase):
    # L^H L q with L q = q - dc * q(anchor): the data term seen relative to the anchor score
    lq = q.copy()
    lq[0, 0] -= np.sum(q * phase)
    return lq - np.conj(phase) * lq[0, 0]


def normal_operator(x_band, reg: Optional[Regularizer], C, grid, phase=None):
    """Matrix-free ``A`` of the filter normal equations on a frequency band.

    With ``phase`` (cropped :func:`anchor_phase`) the data term is measured
    relative to the score at the anchor, as in the structural loss.
    """
    band = x_band.shape[:2]

    def apply_a(u):
        s = np.sum(np.conj(u) * x_band, axis=2)
        if phase is not None:
            s = _anchor_gram(s, phase)
        data = x_band * np.conj(s)[:, :, None]
        if reg is None:
            return data + u / C
        full = pad_spectrum(u, grid)
        return data + crop_spectrum(regularizer_gram(reg, full), band) / C

    return apply_a


def solve_filters_cg(feats, rho_hat, reg: Optional[Regularizer], cfg: SolverConfig,
                     warm=None, iterations=None, band=None, anchor=None):
    """Warm-started CG on the filter normal equations of one layer.

    ``feats`` is the ``(T, T, D)`` interpolated spectrum and ``rho_hat`` the
    label spectrum.  ``reg=None`` means an identity penalty.  The unknowns are
    restricted to ``band`` (default: the block where ``feats`` is non-zero).
    With ``anchor`` the fit ignores the constant level of the scores, which
    makes each solve an exact minimisation of the structural loss for the
    current slack.
    Returns a :class:`CGResult` whose solution is padded back to ``(T, T, D)``.
    """
    feats = np.asarray(feats)
    if feats.ndim == 2:
        feats = feats[:, :, None]
    grid = feats.shape[:2]
    band = band or feature_band(feats)
    xb = crop_spectrum(feats, band)
    rho_hat = np.asarray(rho_hat)
    phase = None
    if anchor is not None:
        full_phase = anchor_phase(grid, anchor)
        rho_hat = _anchor_gram(rho_hat, full_phase)
        phase = crop_spectrum(full_phase, band)
    rb = crop_spectrum(rho_hat, band)
    b = xb * np.conj(rb)[:, :, None]
    x0 = (np.zeros_like(xb, dtype=complex) if warm is None
          else crop_spectrum(np.asarray(warm, dtype=complex), band))
    apply_a = normal_operator(xb, reg, cfg.C, grid, phase)
    precond = None
    if cfg.preconditioner:
        reg_diag = 1.0 if reg is None else float(np.mean(reg.effective ** 2))
        diag = np.abs(xb) ** 2 + reg_diag / cfg.C
        precond = lambda r: r / diag  # noqa: E731
    n_iter = cfg.cg_iterations if iterations is None else iterations
    res = conjugate_gradient(apply_a, b, x0, n_iter, cfg.tolerance, precond)
    # the filters are real; drop the round-off that breaks the symmetry
    res.solution = hermitian_part(pad_spectrum(res.solution, grid))
    return res


def solve_filters_closed(feats, rho_hat, C):
    """Element-wise solution when the spatial penalty is the identity."""
    feats = np.asarray(feats)
    if feats.ndim == 2:
        feats = feats[:, :, None]
    energy = np.sum(np.abs(feats) ** 2, axis=2, keepdims=True)
    return feats * np.conj(np.asarray(rho_hat))[:, :, None] / (energy + 1.0 / C)


def primal_objective(w_hat, feats, cost, reg: Optional[Regularizer], C, anchor=(0, 0)):
    """Penalised structural loss of a filter, slack minimised out.

    ``sum_d ||gamma * w_d||^2 + C * ||eps + J - (S(y0) - S)||^2`` with the
    optimal non-negative slack for the current scores.
    """
    s = score(StructuralFilter((w_hat,)), [feats])[0]
    eps = update_slack(s, cost, anchor)
    data = np.sum((eps + cost - (s[anchor] - s)) ** 2)
    w = idft2(w_hat)
    gamma = 1.0 if reg is None else reg.effective[:, :, None]
    return float(np.sum((gamma * w) ** 2) + C * data)


# dual (kernel) path

def kernel_correlation(a, b, spec: KernelSpec):
    """Spectrum of ``k(p) = kappa(a, b shifted by p)`` over all shifts."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    cross = np.sum(np.conj(a) * b, axis=2)
    if spec.kind == "linear":
        return cross
    lam = a.shape[0] * a.shape[1]
    corr = idft2(cross)
    na = np.sum(np.abs(a) ** 2) / lam
    nb = np.sum(np.abs(b) ** 2) / lam
    dist = np.maximum(na + nb - 2 * corr, 0.0)
    if spec.normalize:
        dist = dist / (lam * a.shape[2])
    return dft2(np.exp(-dist / spec.bandwidth ** 2))


def kernel_autocorrelation(feats, spec: KernelSpec):
    return kernel_correlation(feats, feats, spec)


def solve_dual(k_hat, rho_hat, C, reg: Optional[Regularizer] = None, cfg: SolverConfig = None,
               warm=None, iterations=None):
    """Dual coefficients; closed form without a penalty, CG with one.

    Returns the coefficient spectrum, or a :class:`CGResult` when ``reg`` is
    given.
    """
    k_hat = np.asarray(k_hat)
    rho_hat = np.asarray(rho_hat)
    if reg is None:
        return rho_hat / (k_hat + 1.0 / C)
    cfg = cfg or SolverConfig(C=C)
    diag = k_hat.real

    def apply_a(u):
        return diag * u + regularizer_gram(reg, u) / C

    x0 = np.zeros_like(rho_hat, dtype=complex) if warm is None else np.asarray(warm, dtype=complex)
    n_iter = cfg.cg_iterations if iterations is None else iterations
    res = conjugate_gradient(apply_a, rho_hat.astype(complex), x0, n_iter, cfg.tolerance)
    res.solution = hermitian_part(res.solution)
    return res


def score_dual(k_cross_hat, alpha_hat):
    k_cross_hat = np.asarray(k_cross_hat)
    alpha_hat = np.asarray(alpha_hat)
    if k_cross_hat.shape != alpha_hat.shape:
        raise ValueError(f"shape mismatch {k_cross_hat.shape} vs {alpha_hat.shape}")
    return idft2(pad_spectrum(k_cross_hat * alpha_hat, alpha_hat.shape))


def dual_objective(alpha_hat, k_hat, cost, C, anchor=(0, 0), reg: Optional[Regularizer] = None):
    """Dual form of the structural loss (RKHS norm of the filter plus data term)."""
    lam = alpha_hat.size
    s = score_dual(k_hat, alpha_hat)
    eps = update_slack(s, cost, anchor)
    penalty = np.vdot(alpha_hat, k_hat * alpha_hat).real / lam
    if reg is not None:
        penalty += float(np.sum((reg.effective * idft2(alpha_hat)) ** 2))
    return float(penalty + C * np.sum((eps + cost - (s[anchor] - s)) ** 2))


# alternating optimisation

@dataclass(frozen=True)
class TrainingContext:
    """Everything the optimiser needs about one training sample."""

    feats: tuple
    cost: np.ndarray
    reg: Optional[Regularizer]
    anchor: tuple = (0, 0)
    mode: str = "primal"
    kernel: Optional[KernelSpec] = None


@dataclass
class OptimizationTrace:
    objective: list = field(default_factory=list)
    residual: list = field(default_factory=list)


def collaborative_optimize(ctx: TrainingContext, cfg: SolverConfig, warm: StructuralFilter = None,
                           outer_iterations=None):
    """Alternate slack updates and filter solves; returns ``(filters, trace)``.

    The trace records, per outer iteration, the summed objective over layers
    and the largest relative CG residual.
    """
    n_outer = cfg.outer_iterations if outer_iterations is None else outer_iterations
    if warm is None:
        warm = StructuralFilter.zeros(ctx.feats, ctx.mode, ctx.kernel)
    trace = OptimizationTrace()
    if n_outer == 0:
        return warm, trace
    cfg = replace(cfg, C=cfg.effective_C(ctx.cost.shape), series_weight=False)
    if ctx.mode == "dual":
        return _optimize_dual(ctx, cfg, warm, n_outer, trace)

    layers = list(warm.layers)
    bands = [feature_band(x) for x in ctx.feats]
    for j in range(n_outer):
        objective, worst = 0.0, 0.0
        for l, x in enumerate(ctx.feats):
            s = score(StructuralFilter((layers[l],)), [x])[0]
            eps = update_slack(s, ctx.cost, ctx.anchor)
            _, rho_hat = confidence_labels(s, ctx.cost, eps, ctx.anchor)
            try:
                res = solve_filters_cg(x, rho_hat, ctx.reg, cfg, warm=layers[l], band=bands[l],
                                       anchor=ctx.anchor)
            except SolverDivergence as exc:
                raise SolverDivergence(exc.iteration, f"layer {l}, outer iteration {j}") from exc
            layers[l] = res.solution
            worst = max(worst, res.relative_residual)
            objective += primal_objective(layers[l], x, ctx.cost, ctx.reg, cfg.C, ctx.anchor)
        trace.objective.append(objective)
        trace.residual.append(worst)
        log.debug("outer %d: objective %.6g residual %.3g", j, objective, worst)
    return replace(warm, layers=tuple(layers)), trace


def solve_dual_anchored(k_hat, rho_hat, C, reg=None, cfg: SolverConfig = None, warm=None,
                        iterations=None, anchor=(0, 0)):
    """Dual coefficients minimising the structural loss for fixed slack.

    Solves ``(k L^H L k + (k + Gamma^H Gamma) / C) alpha = k L^H L rho`` by
    CG, where ``L`` removes the score at the anchor.  Without the anchor and
    the penalty this reduces to ``rho / (k + 1/C)``.
    """
    k_hat = np.asarray(k_hat).real
    cfg = cfg or SolverConfig(C=C)
    phase = anchor_phase(k_hat.shape, anchor)

    def apply_a(u):
        out = k_hat * _anchor_gram(k_hat * u, phase) + k_hat * u / C
        if reg is not None:
            out = out + regularizer_gram(reg, u) / C
        return out

    b = k_hat * _anchor_gram(np.asarray(rho_hat, dtype=complex), phase)
    x0 = np.zeros_like(b) if warm is None else np.asarray(warm, dtype=complex)
    n_iter = cfg.cg_iterations if iterations is None else iterations
    # the system is diagonal up to the rank-one anchor term, so Jacobi scaling
    # leaves CG only the anchor coupling to resolve
    reg_diag = 0.0 if reg is None else float(np.mean(reg.effective ** 2))
    diag = k_hat ** 2 + (np.abs(k_hat) + reg_diag) / C
    diag = np.where(diag > 0, diag, 1.0)
    res = conjugate_gradient(apply_a, b, x0, n_iter, cfg.tolerance, lambda r: r / diag)
    res.solution = hermitian_part(res.solution)
    return res


def _optimize_dual(ctx, cfg, warm, n_outer, trace):
    kernels = [kernel_autocorrelation(x, ctx.kernel) for x in ctx.feats]
    alphas = [np.asarray(a) for a in warm.layers]
    if any(a.shape != x.shape[:2] for a, x in zip(alphas, ctx.feats)):
        alphas = [np.zeros(x.shape[:2], dtype=complex) for x in ctx.feats]
    for _ in range(n_outer):
        objective, worst = 0.0, 0.0
        for l, k_hat in enumerate(kernels):
            s = score_dual(k_hat, alphas[l])
            eps = update_slack(s, ctx.cost, ctx.anchor)
            _, rho_hat = confidence_labels(s, ctx.cost, eps, ctx.anchor)
            res = solve_dual_anchored(k_hat, rho_hat, cfg.C, ctx.reg, cfg, warm=alphas[l],
                                      anchor=ctx.anchor)
            alphas[l] = res.solution
            worst = max(worst, res.relative_residual)
            objective += dual_objective(alphas[l], k_hat, ctx.cost, cfg.C, ctx.anchor, ctx.reg)
        trace.objective.append(objective)
        trace.residual.append(worst)
    filt = StructuralFilter(tuple(alphas), mode="dual", train_feats=tuple(ctx.feats),
                            kernel=ctx.kernel)
    return filt, trace
