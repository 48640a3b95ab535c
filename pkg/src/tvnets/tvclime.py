"""Stage 3: time-varying precision matrices from VAR residuals.

Residuals from the stage-2 coefficient paths feed a local-linear covariance
smoother; each covariance matrix is then inverted column by column through
the constrained-ell1 program

    min |omega|_1  subject to  ||Sigma omega - e_j||_inf <= lambda3,

symmetrized by entrywise minimum magnitude, with the constraint level tuned
per grid point by an extended BIC.

Each column is a linear program (positive/negative part splitting).  Because
solutions are sparse, the LP is first solved restricted to a small candidate
support; HiGHS dual marginals certify optimality over the dropped variables,
and the support expands with any violators until the certificate holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import (
    ConvergenceError,
    DegenerateWindowError,
    InfeasibleError,
    SelectionError,
    ValidationError,
)
from .kernels import EPANECHNIKOV, KernelSpec, effective_sample_size, local_linear_weights
from .panel import TimeSeriesPanel, build_lagged_design

__all__ = [
    "ResidualPanel",
    "CovariancePath",
    "PrecisionPath",
    "residuals",
    "local_covariance",
    "covariance_path",
    "clime_column",
    "symmetrize",
    "ebic_select_lambda3",
    "precision_path",
    "default_lambda3_grid",
]

FEASIBILITY_TOL = 1e-9
CERTIFICATE_TOL = 1e-7
LAMBDA3_GRID_SIZE = 10
LAMBDA3_GRID_BOUNDS = (0.01, 0.8)
EBIC_PATIENCE = 4


@dataclass(frozen=True)
class ResidualPanel:
    """One-step-ahead residuals; the first lag_order rows are unavailable."""

    values: np.ndarray          # (n - lag_order, d)
    grid: np.ndarray            # rescaled times of the available rows
    lag_order: int
    n: int
    stage: str

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CovariancePath:
    """Kernel-smoothed covariance matrices along the grid."""

    matrices: np.ndarray        # (n_eval, d, d)
    eval_grid: np.ndarray
    bandwidth: float


@dataclass(frozen=True)
class PrecisionPath:
    """Symmetrized precision matrices with their per-point constraint levels."""

    matrices: np.ndarray        # (n_eval, d, d)
    lambdas: np.ndarray         # (n_eval,)
    eval_grid: np.ndarray
    raw: np.ndarray = None      # pre-symmetrization solutions, same shape
    feasibility: np.ndarray = field(default=None)  # max |Sigma raw - I| per point


def residuals(panel: TimeSeriesPanel, paths, p: int) -> ResidualPanel:
    """Subtract the fitted time-varying VAR part from each observation."""
    d = panel.d
    if len(paths) != d:
        raise ValidationError(f"need one coefficient path per series, got {len(paths)} for d={d}")
    order = {path.response_index: path for path in paths}
    if sorted(order) != list(range(d)):
        raise ValidationError("coefficient paths do not cover every response index")
    stage = paths[0].stage
    design0 = build_lagged_design(panel, 0, p)
    X_lag = design0.regressors
    n_rows = X_lag.shape[0]
    res = np.empty((n_rows, d))
    for i in range(d):
        path = order[i]
        if path.estimates.shape != (panel.n, p * d):
            raise ValidationError(
                f"path for response {i} has shape {path.estimates.shape}, "
                f"expected {(panel.n, p * d)}"
            )
        coef = path.estimates[p:, :]
        res[:, i] = panel.values[p:, i] - np.einsum("rm,rm->r", X_lag, coef)
    return ResidualPanel(values=res, grid=design0.grid, lag_order=p, n=panel.n, stage=stage)


def local_covariance(res: ResidualPanel, tau: float, b: float,
                     spec: KernelSpec = EPANECHNIKOV) -> np.ndarray:
    """Local-linear weighted covariance of the residuals at one point."""
    w = local_linear_weights(res.grid, tau, b, spec)
    total = w.sum()
    if total <= 0.0:
        raise DegenerateWindowError(f"local-linear weights sum to {total} at tau={tau}")
    E = res.values
    S = (E.T * w) @ E / total
    return 0.5 * (S + S.T)


def covariance_path(res: ResidualPanel, b: float, eval_grid=None,
                    spec: KernelSpec = EPANECHNIKOV) -> CovariancePath:
    if eval_grid is None:
        eval_grid = res.grid
    eval_grid = np.asarray(eval_grid, dtype=float)
    mats = np.empty((eval_grid.size, res.d, res.d))
    for s, tau in enumerate(eval_grid):
        mats[s] = local_covariance(res, float(tau), b, spec)
    return CovariancePath(matrices=mats, eval_grid=eval_grid, bandwidth=float(b))


def _solve_restricted(Sigma, j, lam3, support):
    """LP over the columns in `support`; returns (omega_sub, dual_diff, ok)."""
    d = Sigma.shape[0]
    Ss = Sigma[:, support]
    k = support.size
    ej = np.zeros(d)
    ej[j] = 1.0
    A_ub = np.vstack([np.hstack([Ss, -Ss]), np.hstack([-Ss, Ss])])
    b_ub = np.concatenate([ej + lam3, lam3 - ej])
    res = linprog(np.ones(2 * k), A_ub=A_ub, b_ub=b_ub, method="highs")
    if res.status != 0:
        return None, None, False
    x = res.x
    omega_sub = x[:k] - x[k:]
    marg = res.ineqlin.marginals
    dual_diff = marg[:d] - marg[d:]
    return omega_sub, dual_diff, True


def clime_column(Sigma, j: int, lam3: float, support0=None) -> np.ndarray:
    """Minimum-ell1 solution of the column-j constraint set.

    Starts from the singleton support {j} (or a caller-provided warm support)
    and grows it whenever the dual certificate finds a candidate variable with
    reduced cost below zero, falling back to the full LP if the restricted
    one is infeasible.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    d = Sigma.shape[0]
    if Sigma.shape != (d, d):
        raise ValidationError(f"covariance must be square, got {Sigma.shape}")
    if not 0 <= j < d:
        raise ValidationError(f"column index {j} out of range for d={d}")
    if lam3 < 0.0:
        raise ValidationError(f"constraint level must be nonnegative, got {lam3}")
    if support0 is None:
        support = np.array([j], dtype=np.intp)
    else:
        support = np.union1d(np.asarray(support0, dtype=np.intp), [j]).astype(np.intp)
        if support.size and (support.min() < 0 or support.max() >= d):
            raise ValidationError("warm support index out of range")
    for _ in range(d + 1):
        omega_sub, dual_diff, ok = _solve_restricted(Sigma, j, lam3, support)
        if not ok:
            if support.size == d:
                raise InfeasibleError(
                    f"CLIME column {j} infeasible at lambda3={lam3}"
                )
            support = np.arange(d, dtype=np.intp)
            continue
        if support.size == d:
            break
        reduced = np.abs(Sigma @ dual_diff)
        mask = np.ones(d, dtype=bool)
        mask[support] = False
        violators = np.flatnonzero(mask & (reduced > 1.0 + CERTIFICATE_TOL))
        if violators.size == 0:
            break
        support = np.union1d(support, violators).astype(np.intp)
    else:
        raise ConvergenceError(f"CLIME support expansion stalled for column {j}")
    omega = np.zeros(d)
    omega[support] = omega_sub
    gap = np.abs(Sigma @ omega - _unit(d, j)).max()
    if gap > lam3 + FEASIBILITY_TOL:
        raise ConvergenceError(
            f"CLIME column {j} constraint violated by {gap - lam3:.2e}", residual=gap - lam3
        )
    return omega


def _unit(d, j):
    e = np.zeros(d)
    e[j] = 1.0
    return e


def symmetrize(M) -> np.ndarray:
    """Entrywise minimum-magnitude symmetrization; ties keep the (i, j) entry
    with i < j."""
    M = np.asarray(M, dtype=float)
    take_upper = np.abs(M) <= np.abs(M.T)
    out = np.where(take_upper, M, M.T)
    iu = np.triu_indices_from(out, k=1)
    out[(iu[1], iu[0])] = out[iu]
    return out


def default_lambda3_grid(size: int = LAMBDA3_GRID_SIZE) -> np.ndarray:
    lo, hi = LAMBDA3_GRID_BOUNDS
    return np.geomspace(hi, lo, size)


def ebic_select_lambda3(Sigma, n_e: float, grid=None, warm_supports=None):
    """Extended-BIC choice of the constraint level for one covariance matrix.

    Returns (lambda3, Omega_hat, Omega_raw, table).  Candidates whose
    symmetrized solution is not positive definite are skipped; ties prefer
    the larger constraint level.

    ``warm_supports`` is an optional mutable list of per-column support
    indices used to seed the LP solves; it is updated in place so callers
    sweeping nearby covariances can reuse it.
    """
    if grid is None:
        grid = default_lambda3_grid()
    grid = np.sort(np.asarray(grid, dtype=float))[::-1].copy()
    if grid.size == 0:
        raise SelectionError("empty lambda3 candidate grid")
    if n_e <= 1.0:
        raise ValidationError(f"effective sample size must exceed 1, got {n_e}")
    Sigma = np.asarray(Sigma, dtype=float)
    d = Sigma.shape[0]
    penalty = math.log(n_e) / n_e
    if warm_supports is None:
        warm_supports = [None] * d
    best = None
    table = np.full(grid.size, np.nan)
    skipped = 0
    stale = 0
    for k, lam3 in enumerate(grid):
        try:
            cols = []
            for j in range(d):
                om = clime_column(Sigma, j, float(lam3), support0=warm_supports[j])
                warm_supports[j] = np.flatnonzero(om != 0.0)
                cols.append(om)
            raw = np.column_stack(cols)
        except (InfeasibleError, ConvergenceError):
            skipped += 1
            continue
        Omega = symmetrize(raw)
        sign, logdet = np.linalg.slogdet(Omega)
        if sign <= 0.0 or np.linalg.eigvalsh(Omega).min() <= 0.0:
            skipped += 1
            continue
        iu = np.triu_indices(d, k=1)
        df = int(np.count_nonzero(Omega[iu]))
        ebic = -logdet + float(np.trace(Omega @ Sigma)) + penalty * df
        table[k] = ebic
        if best is None or ebic < best[0] - 1e-12:
            best = (ebic, float(lam3), Omega, raw)
            stale = 0
        else:
            stale += 1
            if stale >= EBIC_PATIENCE:
                break
    if best is None:
        raise SelectionError(
            f"no positive-definite precision candidate among {grid.size} levels "
            f"({skipped} skipped)"
        )
    _, lam3, Omega, raw = best
    return lam3, Omega, raw, table


def _sparsest_feasible(Sigma, grid, warm_supports):
    """Largest constraint level whose columns all solve; PD is not required."""
    if grid is None:
        grid = default_lambda3_grid()
    grid = np.sort(np.asarray(grid, dtype=float))[::-1]
    d = Sigma.shape[0]
    for lam3 in grid:
        try:
            cols = []
            for j in range(d):
                om = clime_column(Sigma, j, float(lam3), support0=warm_supports[j])
                warm_supports[j] = np.flatnonzero(om != 0.0)
                cols.append(om)
        except (InfeasibleError, ConvergenceError):
            continue
        raw = np.column_stack(cols)
        return float(lam3), symmetrize(raw), raw
    raise SelectionError("no feasible constraint level at this grid point")


def precision_path(res: ResidualPanel, b: float, grid=None, lambda3=None,
                   eval_grid=None, spec: KernelSpec = EPANECHNIKOV) -> PrecisionPath:
    """Precision matrices along the grid.

    With `lambda3` fixed, every point uses that constraint level; otherwise
    the level is selected per point by the extended BIC over `grid`.
    """
    if eval_grid is None:
        eval_grid = res.grid
    eval_grid = np.asarray(eval_grid, dtype=float)
    d = res.d
    mats = np.empty((eval_grid.size, d, d))
    raws = np.empty_like(mats)
    lambdas = np.empty(eval_grid.size)
    feas = np.empty(eval_grid.size)
    eye = np.eye(d)
    # LP supports vary slowly along the grid, so each point seeds the next
    warm = [None] * d
    for s, tau in enumerate(eval_grid):
        Sigma = local_covariance(res, float(tau), b, spec)
        if lambda3 is not None:
            lam3 = float(lambda3)
            cols = []
            for j in range(d):
                om = clime_column(Sigma, j, lam3, support0=warm[j])
                warm[j] = np.flatnonzero(om != 0.0)
                cols.append(om)
            raw = np.column_stack(cols)
            Omega = symmetrize(raw)
        else:
            n_e = effective_sample_size(res.grid, float(tau), b, spec)
            try:
                lam3, Omega, raw, _ = ebic_select_lambda3(Sigma, n_e, grid=grid,
                                                          warm_supports=warm)
            except SelectionError:
                # boundary windows can yield indefinite covariances where no
                # candidate is positive definite; keep the sparsest feasible
                # solution there instead of abandoning the whole path
                lam3, Omega, raw = _sparsest_feasible(Sigma, grid, warm)
        mats[s] = Omega
        raws[s] = raw
        lambdas[s] = lam3
        feas[s] = np.abs(Sigma @ raw - eye).max()
    return PrecisionPath(matrices=mats, lambdas=lambdas, eval_grid=eval_grid,
                         raw=raws, feasibility=feas)
