"""Stage 1: preliminary penalised local-linear estimation with l1 shrinkage.

Each response column is regressed on the lagged design at every grid point,
with the derivative block reparameterized as h*beta so a single penalty level
applies to both blocks.  The per-point penalty is chosen by a kernel-weighted
BIC by default.  The resulting coefficient paths are a screening device: they
feed the folded-concave weights of the second stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._cd import cd_path_bic, cd_solve
from .errors import SelectionError, ValidationError
from .kernels import EPANECHNIKOV, KernelSpec
from .localgram import LocalGramCache
from .panel import LaggedDesign

__all__ = [
    "LocalLassoFit",
    "CoefficientPath",
    "local_lasso",
    "bic_select_lambda1",
    "preliminary_path",
    "default_lambda1_grid",
]

CD_TOL = 1e-7
CD_MAX_SWEEPS = 10_000
LAMBDA1_GRID_SIZE = 50
LAMBDA1_GRID_DECADES = 3.0
PATH_PATIENCE = 12


@dataclass(frozen=True)
class LocalLassoFit:
    """Single-point fit: levels, derivatives, tuning level and objective value."""

    alpha: np.ndarray
    beta: np.ndarray
    tau: float
    lambda1: float
    objective: float


@dataclass(frozen=True)
class CoefficientPath:
    """Per-response coefficient paths over the full grid.

    ``estimates``/``derivatives`` have one row per grid point and one column
    per lagged regressor.  ``stage`` tags which estimator produced the path.
    """

    estimates: np.ndarray
    derivatives: np.ndarray
    response_index: int
    lag_order: int
    stage: str
    tuning: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.estimates.shape != self.derivatives.shape:
            raise ValidationError("estimates and derivatives must have equal shapes")
        if self.stage not in ("preliminary", "weighted-group", "oracle", "full"):
            raise ValidationError(f"unknown stage tag {self.stage!r}")

    @property
    def n(self) -> int:
        return self.estimates.shape[0]


def _cache_for(design: LaggedDesign, h: float, spec: KernelSpec, eval_grid=None) -> LocalGramCache:
    if eval_grid is None:
        eval_grid = np.arange(1, design.n + 1, dtype=float) / design.n
    return LocalGramCache(
        design.regressors, design.response, design.grid, np.atleast_1d(eval_grid), h, spec,
        n_norm=design.n,
    )


def default_lambda1_grid(lam_max: float, size: int = LAMBDA1_GRID_SIZE) -> np.ndarray:
    """Log-spaced candidates from lam_max down three decades."""
    if lam_max <= 0.0:
        return np.zeros(1)
    return np.geomspace(lam_max, lam_max * 10.0 ** (-LAMBDA1_GRID_DECADES), size)


def _lambda_max(cache: LocalGramCache, s: int, i: int) -> float:
    # smallest penalty whose solution is exactly zero: the max absolute
    # gradient coordinate of the smooth part at the origin
    return 2.0 * np.max(np.abs(cache.score(s, i))) / cache.n_norm


def _fit_at(cache: LocalGramCache, s: int, i: int, lam1: float, theta0=None) -> LocalLassoFit:
    m = cache.m
    G = cache.gram_full(s)
    c = cache.score(s, i)
    theta = np.zeros(2 * m) if theta0 is None else theta0.copy()
    q, _ = cd_solve(G, c, lam1, theta, cache.n_norm, CD_TOL, CD_MAX_SWEEPS)
    loss = (cache.ysq[s, i] - 2.0 * (c @ theta) + theta @ q) / cache.n_norm
    objective = loss + lam1 * np.abs(theta).sum()
    return LocalLassoFit(
        alpha=theta[:m].copy(),
        beta=theta[m:] / cache.h,
        tau=float(cache.eval_grid[s]),
        lambda1=float(lam1),
        objective=float(objective),
    )


def local_lasso(design: LaggedDesign, tau: float, h: float, lam1: float,
                spec: KernelSpec = EPANECHNIKOV) -> LocalLassoFit:
    """Penalised local-linear fit at a single evaluation point."""
    if lam1 < 0.0:
        raise ValidationError(f"lambda1 must be nonnegative, got {lam1}")
    cache = _cache_for(design, h, spec, eval_grid=[tau])
    return _fit_at(cache, 0, 0, lam1)


def bic_select_lambda1(design: LaggedDesign, tau: float, h: float, grid=None,
                       spec: KernelSpec = EPANECHNIKOV):
    """Kernel-weighted BIC selection of the stage-1 penalty at one point.

    Returns (selected_lambda1, fit).  Ties go to the larger penalty.
    """
    cache = _cache_for(design, h, spec, eval_grid=[tau])
    i = 0
    if grid is None:
        grid = default_lambda1_grid(_lambda_max(cache, 0, i))
    grid = np.sort(np.asarray(grid, dtype=float))[::-1].copy()
    if grid.size == 0:
        raise SelectionError("empty lambda1 candidate grid")
    if np.any(grid < 0.0):
        raise ValidationError("lambda1 candidates must be nonnegative")
    theta_grid = np.zeros((grid.size, 2 * cache.m))
    best, theta, _ = cd_path_bic(
        cache.gram_full(0), cache.score(0, i), cache.ysq[0, i],
        cache.kernel_mass[0], cache.effective_sample_size(0),
        grid, cache.n_norm, CD_TOL, CD_MAX_SWEEPS, theta_grid, grid.size,
    )
    if best < 0:
        raise SelectionError("BIC selection failed on every candidate")
    lam = float(grid[best])
    return lam, _fit_at(cache, 0, i, lam, theta0=theta)


def preliminary_path(design: LaggedDesign, h: float, lam1="bic", grid=None,
                     spec: KernelSpec = EPANECHNIKOV) -> CoefficientPath:
    """Stage-1 coefficient path over the full grid for one response.

    ``lam1`` is either a fixed nonnegative level or "bic" for per-point
    selection.
    """
    cache = _cache_for(design, h, spec)
    path = path_from_cache(cache, 0, design.lag_order, lam1, grid)
    return replace(path, response_index=design.response_index)


def path_from_cache(cache: LocalGramCache, i: int, p: int, lam1="bic", grid=None) -> CoefficientPath:
    """Stage-1 path for response ``i`` on a prebuilt Gram cache.

    Shared by the per-response API and the batched pipeline, which reuses one
    cache across all responses.
    """
    m = cache.m
    n_eval = cache.n_eval
    est = np.zeros((n_eval, m))
    der = np.zeros((n_eval, m))
    lambdas = np.zeros(n_eval)
    theta = np.zeros(2 * m)
    theta_grid = None
    fixed_cand = None
    if lam1 == "bic" and grid is not None:
        fixed_cand = np.sort(np.asarray(grid, dtype=float))[::-1].copy()
    for s in range(n_eval):
        G = cache.gram_full(s)
        c = cache.score(s, i)
        if lam1 == "bic":
            lam_max = _lambda_max(cache, s, i)
            cand = default_lambda1_grid(lam_max) if fixed_cand is None else fixed_cand
            if theta_grid is None or theta_grid.shape[0] != cand.size:
                theta_grid = np.zeros((cand.size, 2 * m))
            # warm starts carry over both along the penalty grid and across
            # consecutive evaluation points
            best, theta, _ = cd_path_bic(
                G, c, cache.ysq[s, i], cache.kernel_mass[s],
                cache.effective_sample_size(s), cand,
                cache.n_norm, CD_TOL, CD_MAX_SWEEPS, theta_grid, PATH_PATIENCE,
            )
            if best < 0:
                raise SelectionError(f"BIC selection failed at grid index {s}")
            lam = float(cand[best])
        else:
            lam = float(lam1)
            if lam < 0.0:
                raise ValidationError("lambda1 must be nonnegative")
            cd_solve(G, c, lam, theta, cache.n_norm, CD_TOL, CD_MAX_SWEEPS)
        est[s] = theta[:m]
        der[s] = theta[m:] / cache.h
        lambdas[s] = lam
    return CoefficientPath(
        estimates=est, derivatives=der, response_index=i,
        lag_order=p, stage="preliminary", tuning=lambdas,
    )
