"""Stage 2: global penalised local-linear estimation with weighted group LASSO.

Each lagged regressor j contributes two groups: its level path over the grid
and its (scaled) derivative path.  Group weights come from the derivative of
the folded-concave SCAD penalty evaluated at stage-1 statistics, so strong
preliminary signals are penalised lightly or not at all.  The solver is block
coordinate descent over groups with a proximal-gradient inner loop; the loss
decouples across grid points within a group, so every inner step works on
n-vectors of 2x2 quadratics.

Also houses the unpenalised comparators: the infeasible oracle fit restricted
to a known support and the full per-point least-squares fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, SelectionError, ValidationError
from .kernels import EPANECHNIKOV, KernelSpec
from ._cd import group_bcd
from .localgram import LocalGramCache
from .panel import LaggedDesign
from .tvlasso import CoefficientPath

__all__ = [
    "ScadPenalty",
    "GroupWeights",
    "scad_derivative",
    "deviation_stat",
    "build_weights",
    "fit_weighted_group_lasso",
    "gic_select_lambda2",
    "fit_oracle",
    "fit_full",
    "default_lambda2_grid",
    "group_kkt_residuals",
]

SCAD_A0 = 3.7
OUTER_TOL = 1e-8
MAX_OUTER = 500
INNER_TOL = 1e-10
MAX_INNER = 30
KKT_TOL = 5e-6
ACTIVATION_EPS = 1e-9
LAMBDA2_GRID_SIZE = 30
LAMBDA2_GRID_DECADES = 3.0
GIC_PATIENCE = 10


@dataclass(frozen=True)
class ScadPenalty:
    """SCAD level and shape; the derivative vanishes beyond a0 * lam."""

    lam: float
    a0: float = SCAD_A0

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValidationError(f"SCAD level must be nonnegative, got {self.lam}")
        if self.a0 <= 2.0:
            raise ValidationError(f"SCAD shape must exceed 2, got {self.a0}")


@dataclass(frozen=True)
class GroupWeights:
    """Per-group penalty weights for the level and derivative paths."""

    w_alpha: np.ndarray
    w_beta: np.ndarray
    lambda2: float


def scad_derivative(z, lam, a0: float = SCAD_A0):
    """Derivative of the SCAD penalty: lam on [0, lam], linear decay to 0 at a0*lam."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0.0):
        raise ValidationError("scad_derivative requires nonnegative arguments")
    if lam < 0.0:
        raise ValidationError(f"SCAD level must be nonnegative, got {lam}")
    if lam == 0.0:
        out = np.zeros_like(z)
        return out if out.ndim else 0.0
    out = np.where(z <= lam, lam, np.maximum(a0 * lam - z, 0.0) / (a0 - 1.0))
    return out if out.ndim else float(out)


def deviation_stat(column) -> float:
    """Root sum of squared deviations of a path from its time average."""
    col = np.asarray(column, dtype=float)
    return float(np.linalg.norm(col - col.mean()))


def build_weights(prelim: CoefficientPath, lam2: float, a0: float = SCAD_A0) -> GroupWeights:
    """Group weights from a preliminary path: SCAD derivative at the column
    norm (levels) and at the deviation statistic (derivatives)."""
    if prelim.stage != "preliminary":
        raise ValidationError(f"weights need a preliminary path, got stage {prelim.stage!r}")
    norms = np.linalg.norm(prelim.estimates, axis=0)
    devs = np.linalg.norm(prelim.estimates - prelim.estimates.mean(axis=0), axis=0)
    return GroupWeights(
        w_alpha=np.asarray(scad_derivative(norms, lam2, a0)),
        w_beta=np.asarray(scad_derivative(devs, lam2, a0)),
        lambda2=float(lam2),
    )


class GroupLassoProblem:
    """Gram-parameterized group-LASSO problem for one response.

    Operates on the scaled-derivative parameterization (alpha, h*beta); both
    penalties are then plain Euclidean group norms.  Reused across penalty
    candidates with warm starts.
    """

    def __init__(self, cache: LocalGramCache, i: int):
        self.cache = cache
        self.i = i
        self.m = cache.m
        self.n_eval = cache.n_eval
        self.nn = cache.n_norm
        self.C0 = cache.C0[:, :, i]   # (n_eval, m)
        self.C1 = cache.C1[:, :, i]
        self.ysq_total = cache.ysq[:, i].sum()
        # per-group 2x2 Hessian blocks of the smooth part, times 2/n
        jj = np.arange(self.m)
        g00 = cache.G00[:, jj, jj]
        g01 = cache.G01[:, jj, jj]
        g11 = cache.G11[:, jj, jj]
        self.H = (2.0 / self.nn) * np.stack(
            [np.stack([g00, g01], axis=-1), np.stack([g01, g11], axis=-1)], axis=-2
        )  # (n_eval, m, 2, 2)
        tr = g00 + g11
        det = g00 * g11 - g01 * g01
        lam_max = 0.5 * (tr + np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0)))
        self.lipschitz = (2.0 / self.nn) * lam_max.max(axis=0)  # (m,)

    # -- state helpers ----------------------------------------------------

    def _recompute_U(self, A, B):
        act = np.flatnonzero(np.any(A != 0.0, axis=0) | np.any(B != 0.0, axis=0))
        if act.size == 0:
            z = np.zeros((self.n_eval, self.m))
            return z, z.copy()
        G00 = self.cache.G00[:, :, act]
        G01 = self.cache.G01[:, :, act]
        G11 = self.cache.G11[:, :, act]
        U0 = np.einsum("sma,sa->sm", G00, A[:, act]) + np.einsum("sma,sa->sm", G01, B[:, act])
        U1 = np.einsum("sma,sa->sm", G01, A[:, act]) + np.einsum("sma,sa->sm", G11, B[:, act])
        return U0, U1

    def loss(self, A, B, U0=None, U1=None) -> float:
        if U0 is None:
            U0, U1 = self._recompute_U(A, B)
        quad = np.sum(A * U0) + np.sum(B * U1)
        lin = np.sum(A * self.C0) + np.sum(B * self.C1)
        return (self.ysq_total - 2.0 * lin + quad) / self.nn

    def objective(self, A, B, w: GroupWeights) -> float:
        pen = float(w.w_alpha @ np.linalg.norm(A, axis=0) + w.w_beta @ np.linalg.norm(B, axis=0))
        return self.loss(A, B) + pen

    # -- solver ------------------------------------------------------------

    def solve(self, w: GroupWeights, warm=None):
        """Block coordinate descent to the stated outer tolerance.

        Returns (A, B) with exact zeros for eliminated groups; B holds the
        scaled derivatives h*beta.
        """
        n_eval, m = self.n_eval, self.m
        if warm is None:
            A = np.zeros((n_eval, m))
            B = np.zeros((n_eval, m))
        else:
            A, B = warm[0].copy(), warm[1].copy()
        wa = np.ascontiguousarray(w.w_alpha, dtype=float)
        wb = np.ascontiguousarray(w.w_beta, dtype=float)
        C0 = np.ascontiguousarray(self.C0)
        C1 = np.ascontiguousarray(self.C1)
        outer_tol, max_inner = OUTER_TOL, MAX_INNER
        resid = np.inf
        for _ in range(4):
            converged = group_bcd(
                self.cache.G00, self.cache.G01, self.cache.G11, C0, C1,
                self.ysq_total, float(self.nn), wa, wb,
                A, B, self.lipschitz,
                outer_tol, MAX_OUTER, INNER_TOL, max_inner, ACTIVATION_EPS,
            )
            if not converged:
                break
            U0, U1 = self._recompute_U(A, B)
            resid = self._max_kkt_residual(A, B, U0, U1, w)
            if resid <= KKT_TOL:
                return A, B
            # objective flattened before the stationarity gap closed; rerun
            # warm with a tighter schedule until the gap certifies optimality
            outer_tol *= 1e-3
            max_inner *= 10
        raise ConvergenceError(
            "group LASSO stalled before reaching the stationarity tolerance",
            residual=resid,
        )

    def _max_kkt_residual(self, A, B, U0, U1, w) -> float:
        R0 = (2.0 / self.nn) * (U0 - self.C0)
        R1 = (2.0 / self.nn) * (U1 - self.C1)
        res = 0.0
        for R, Z, wt in ((R0, A, w.w_alpha), (R1, B, w.w_beta)):
            norms = np.linalg.norm(Z, axis=0)
            gn = np.linalg.norm(R, axis=0)
            for j in range(self.m):
                if norms[j] > 0.0:
                    res = max(res, float(np.linalg.norm(R[:, j] + wt[j] * Z[:, j] / norms[j])))
                else:
                    res = max(res, max(0.0, float(gn[j]) - wt[j]))
        return res


def _cache_for(design: LaggedDesign, h: float, spec: KernelSpec) -> LocalGramCache:
    eval_grid = np.arange(1, design.n + 1, dtype=float) / design.n
    return LocalGramCache(design.regressors, design.response, design.grid, eval_grid, h, spec,
                          n_norm=design.n)


def _path(A, B, h, i, p, stage, tuning=None) -> CoefficientPath:
    return CoefficientPath(
        estimates=A.copy(), derivatives=B / h, response_index=i,
        lag_order=p, stage=stage, tuning=tuning,
    )


def fit_weighted_group_lasso(design: LaggedDesign, h: float, weights: GroupWeights,
                             spec: KernelSpec = EPANECHNIKOV, cache: LocalGramCache = None,
                             warm=None) -> CoefficientPath:
    """Solve the weighted group LASSO for one response over the full grid."""
    if cache is None:
        cache = _cache_for(design, h, spec)
        i = 0 if cache.n_resp == 1 else design.response_index
    else:
        i = design.response_index
    if weights.w_alpha.shape != (cache.m,) or weights.w_beta.shape != (cache.m,):
        raise ValidationError("weight vectors do not match the design dimension")
    prob = GroupLassoProblem(cache, i)
    A, B = prob.solve(weights, warm=warm)
    return _path(A, B, h, design.response_index, design.lag_order, "weighted-group")


def default_lambda2_grid(design: LaggedDesign = None, h: float = None,
                         spec: KernelSpec = EPANECHNIKOV, cache: LocalGramCache = None,
                         i: int = None, size: int = LAMBDA2_GRID_SIZE) -> np.ndarray:
    """Log-spaced candidates bracketing the level that zeroes every
    fully-weighted group (weight equal to the penalty level)."""
    if cache is None:
        cache = _cache_for(design, h, spec)
        i = 0
    scale = 2.0 / cache.n_norm
    lam_max = max(
        float(np.linalg.norm(scale * cache.C0[:, :, i], axis=0).max()),
        float(np.linalg.norm(scale * cache.C1[:, :, i], axis=0).max()),
    )
    if lam_max <= 0.0:
        return np.zeros(1)
    return np.geomspace(lam_max, lam_max * 10.0 ** (-LAMBDA2_GRID_DECADES), size)


def gic_select_lambda2(design: LaggedDesign, prelim: CoefficientPath, h: float,
                       grid=None, gamma: float = 1.0, spec: KernelSpec = EPANECHNIKOV,
                       cache: LocalGramCache = None):
    """Generalised-information-criterion selection of the stage-2 penalty.

    Returns (lambda2, path, gic_table).  Candidates are swept in decreasing
    order with warm starts; ties keep the larger penalty.
    """
    if not (0.0 < gamma <= 1.0):
        raise ValidationError(f"gamma must lie in (0, 1], got {gamma}")
    own_cache = cache is None
    if own_cache:
        cache = _cache_for(design, h, spec)
        i = 0 if cache.n_resp == 1 else design.response_index
    else:
        i = design.response_index
    if grid is None:
        grid = default_lambda2_grid(cache=cache, i=i)
    grid = np.sort(np.asarray(grid, dtype=float))[::-1].copy()
    if grid.size == 0:
        raise SelectionError("empty lambda2 candidate grid")
    prob = GroupLassoProblem(cache, i)
    n = design.n
    d = design.d
    gamma_nd = gamma * math.log(math.log(n)) * math.log(36.0 * d / (35.0 * h))
    p = design.lag_order

    best = None
    warm = None
    gic_values = np.full(grid.size, np.nan)
    failures = 0
    stale = 0
    for k, lam2 in enumerate(grid):
        w = build_weights(prelim, float(lam2))
        try:
            A, B = prob.solve(w, warm=warm)
        except ConvergenceError:
            failures += 1
            continue
        warm = (A, B)
        sse = _prediction_sse(cache, design, i, A)
        s_active = int(np.count_nonzero(np.any(A != 0.0, axis=0)))
        gic = math.log(sse / design.n_effective) + (gamma_nd / n) * (36.0 * s_active / (35.0 * h))
        gic_values[k] = gic
        if best is None or gic < best[0] - 1e-12:
            best = (gic, float(lam2), A.copy(), B.copy())
            stale = 0
        else:
            stale += 1
            if stale >= GIC_PATIENCE:
                break
    if best is None:
        raise SelectionError(f"all {failures} lambda2 candidates failed to converge")
    _, lam2, A, B = best
    path = _path(A, B, h, design.response_index, p, "weighted-group",
                 tuning=np.full(cache.n_eval, lam2))
    return lam2, path, gic_values


def _prediction_sse(cache: LocalGramCache, design: LaggedDesign, i: int, A) -> float:
    """Sum of squared one-step prediction errors using the per-point levels."""
    p = design.lag_order
    rows = cache.X_lag
    # row r is time t = p + 1 + r, matching evaluation index s = p + r
    coef = A[p:, :]
    fitted = np.einsum("rm,rm->r", rows, coef)
    resid = cache.Y[:, i] - fitted
    return float(resid @ resid)


def fit_oracle(design: LaggedDesign, h: float, level_support, deriv_support,
               spec: KernelSpec = EPANECHNIKOV, cache: LocalGramCache = None) -> CoefficientPath:
    """Unpenalised local-linear fit restricted to a known support (infeasible
    outside simulations).  Excluded columns are exactly zero."""
    if cache is None:
        cache = _cache_for(design, h, spec)
        i = 0 if cache.n_resp == 1 else design.response_index
    else:
        i = design.response_index
    level_idx = np.asarray(sorted(set(int(j) for j in level_support)), dtype=np.intp)
    deriv_idx = np.asarray(sorted(set(int(j) for j in deriv_support)), dtype=np.intp)
    if level_idx.size and (level_idx.min() < 0 or level_idx.max() >= cache.m):
        raise ValidationError("level support index out of range")
    if deriv_idx.size and (deriv_idx.min() < 0 or deriv_idx.max() >= cache.m):
        raise ValidationError("derivative support index out of range")
    A = np.zeros((cache.n_eval, cache.m))
    B = np.zeros((cache.n_eval, cache.m))
    for s in range(cache.n_eval):
        a_sub, b_sub = cache.solve_restricted(s, i, level_idx, deriv_idx)
        A[s, level_idx] = a_sub
        B[s, deriv_idx] = b_sub
    return _path(A, B, h, design.response_index, design.lag_order, "oracle")


def fit_full(design: LaggedDesign, h: float, spec: KernelSpec = EPANECHNIKOV,
             cache: LocalGramCache = None) -> CoefficientPath:
    """Unpenalised local-linear fit of all coefficients (fails by design when
    the local window cannot identify them)."""
    if cache is None:
        cache = _cache_for(design, h, spec)
        i = 0 if cache.n_resp == 1 else design.response_index
    else:
        i = design.response_index
    every = np.arange(cache.m)
    A = np.zeros((cache.n_eval, cache.m))
    B = np.zeros((cache.n_eval, cache.m))
    for s in range(cache.n_eval):
        a_sub, b_sub = cache.solve_restricted(s, i, every, every)
        A[s] = a_sub
        B[s] = b_sub
    path = _path(A, B, h, design.response_index, design.lag_order, "full")
    return path


def group_kkt_residuals(design: LaggedDesign, h: float, weights: GroupWeights,
                        path: CoefficientPath, spec: KernelSpec = EPANECHNIKOV,
                        cache: LocalGramCache = None):
    """Per-group KKT residuals of a fitted path (diagnostic / test hook).

    Active groups report the norm of gradient + weight * direction; inactive
    groups report the positive part of gradient norm minus weight.
    """
    if cache is None:
        cache = _cache_for(design, h, spec)
        i = 0 if cache.n_resp == 1 else design.response_index
    else:
        i = design.response_index
    prob = GroupLassoProblem(cache, i)
    A = path.estimates
    B = path.derivatives * h
    U0, U1 = prob._recompute_U(A, B)
    scale = 2.0 / prob.nn
    R0 = scale * (U0 - prob.C0)
    R1 = scale * (U1 - prob.C1)
    out_a = np.empty(prob.m)
    out_b = np.empty(prob.m)
    for R, Z, wt, out in ((R0, A, weights.w_alpha, out_a), (R1, B, weights.w_beta, out_b)):
        for j in range(prob.m):
            col = Z[:, j]
            nc = np.linalg.norm(col)
            if nc > 0.0:
                out[j] = np.linalg.norm(R[:, j] + wt[j] * col / nc)
            else:
                out[j] = max(0.0, np.linalg.norm(R[:, j]) - wt[j])
    return out_a, out_b
