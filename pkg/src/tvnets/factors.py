"""Factor adjustment: strip a low-rank common component before VAR fitting.

Constant loadings use principal components of the full sample; time-varying
loadings use principal components of kernel-reweighted data at each grid
point, with the common component rescaled back to the original data scale.
Factor counts come from information criteria on the residual sum of squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWindowError, NumericError, ValidationError
from .kernels import EPANECHNIKOV, KernelSpec, kernel_eval
from .panel import TimeSeriesPanel

__all__ = [
    "FactorFit",
    "pca_factors",
    "local_pca",
    "select_num_factors",
    "factor_adjust",
]


@dataclass(frozen=True)
class FactorFit:
    """Estimated factors and loadings; time-varying fits are local to one point."""

    factors: np.ndarray         # (n, k), scaled so factors.T @ factors / n = I_k
    loadings: np.ndarray        # (d, k)
    k: int
    mode: str                   # "constant" | "time-varying"
    h_star: float = None
    tau: float = None
    weights: np.ndarray = None  # normalized kernel weights (time-varying only)


def _top_factors(Z: np.ndarray, k: int):
    """Factors sqrt(n) x top-k eigenvectors of Z Z', computed via the d x d
    Gram dual when that is the smaller problem."""
    n, d = Z.shape
    if d <= n:
        G = Z.T @ Z
        vals, vecs = np.linalg.eigh(G)
        order = np.argsort(vals)[::-1][:k]
        s2 = np.maximum(vals[order], 0.0)
        V = vecs[:, order]
        s = np.sqrt(s2)
        F = np.zeros((n, k))
        nz = s > s.max() * 1e-13 if s.size and s.max() > 0.0 else np.zeros(k, dtype=bool)
        F[:, nz] = Z @ V[:, nz] / s[nz]
    else:
        G = Z @ Z.T
        vals, vecs = np.linalg.eigh(G)
        order = np.argsort(vals)[::-1][:k]
        F = vecs[:, order]
    if not np.all(np.isfinite(F)):
        raise NumericError("eigen decomposition produced non-finite factors")
    F = F * math.sqrt(n)
    # sign convention: the entry of largest magnitude in each column is positive
    for c in range(F.shape[1]):
        col = F[:, c]
        if col.any():
            peak = np.argmax(np.abs(col))
            if col[peak] < 0.0:
                F[:, c] = -col
    Lam = Z.T @ F / n
    return F, Lam


def pca_factors(Z: TimeSeriesPanel, k: int) -> FactorFit:
    """Principal-component factors for constant loadings."""
    n, d = Z.n, Z.d
    if not 1 <= k <= min(n, d):
        raise ValidationError(f"factor count {k} outside [1, {min(n, d)}]")
    F, Lam = _top_factors(Z.values, k)
    return FactorFit(factors=F, loadings=Lam, k=k, mode="constant")


def local_pca(Z: TimeSeriesPanel, tau: float, h_star: float, k: int,
              spec: KernelSpec = EPANECHNIKOV) -> FactorFit:
    """Principal components of kernel-reweighted data at one grid point.

    Row t of the data is scaled by the square root of the normalized weight
    K_{h*}(tau_t - tau) / sum_s K_{h*}(tau_s - tau) before the eigenanalysis.
    """
    n, d = Z.n, Z.d
    if not 1 <= k <= min(n, d):
        raise ValidationError(f"factor count {k} outside [1, {min(n, d)}]")
    raw = kernel_eval((Z.grid - tau) / h_star, spec) / h_star
    total = raw.sum()
    if np.count_nonzero(raw) < max(k, 2) or total <= 0.0:
        raise DegenerateWindowError(
            f"local PCA window at tau={tau} has {np.count_nonzero(raw)} points"
        )
    w = raw / total
    Zw = np.sqrt(w)[:, None] * Z.values
    F, Lam = _top_factors(Zw, k)
    return FactorFit(factors=F, loadings=Lam, k=k, mode="time-varying",
                     h_star=float(h_star), tau=float(tau), weights=w)


def _idiosyncratic(Z: TimeSeriesPanel, k: int, mode: str, h_star: float,
                   spec: KernelSpec) -> np.ndarray:
    if mode == "constant":
        fit = pca_factors(Z, k)
        return Z.values - fit.factors @ fit.loadings.T
    if mode == "time-varying":
        if h_star is None:
            raise ValidationError("time-varying factor adjustment needs a bandwidth")
        n = Z.n
        out = np.empty_like(Z.values)
        for t in range(n):
            fit = local_pca(Z, float(Z.grid[t]), h_star, k, spec)
            wt = fit.weights[t]
            if wt <= 0.0:
                raise DegenerateWindowError(
                    f"observation {t + 1} has zero weight in its own window"
                )
            # the local fit approximates the reweighted row sqrt(w_t) Z_t,
            # so the common component is scaled back by 1/sqrt(w_t)
            common = fit.loadings @ fit.factors[t] / math.sqrt(wt)
            out[t] = Z.values[t] - common
        return out
    raise ValidationError(f"unknown factor mode {mode!r}")


def select_num_factors(Z: TimeSeriesPanel, mode: str = "constant", qmax: int = 8,
                       h_star: float = None, spec: KernelSpec = EPANECHNIKOV):
    """Information-criterion choice of the factor count.

    Returns (k_hat, ic_table) where ic_table[q-1] is the criterion at q
    factors; ties prefer the smaller count.
    """
    if qmax < 1:
        raise ValidationError(f"qmax must be at least 1, got {qmax}")
    n, d = Z.n, Z.d
    qmax = min(qmax, min(n, d))
    if mode == "constant":
        scale = n
    elif mode == "time-varying":
        if h_star is None:
            raise ValidationError("time-varying factor selection needs a bandwidth")
        scale = n * h_star
    else:
        raise ValidationError(f"unknown factor mode {mode!r}")
    penalty_unit = ((scale + d) / (scale * d)) * math.log(min(scale, d))
    table = np.empty(qmax)
    best = None
    for q in range(1, qmax + 1):
        resid = _idiosyncratic(Z, q, mode, h_star, spec)
        v = float(np.sum(resid * resid))
        ic = math.log(max(v, 1e-300)) + q * penalty_unit
        table[q - 1] = ic
        if best is None or ic < best[0] - 1e-12:
            best = (ic, q)
    return best[1], table


def factor_adjust(Z: TimeSeriesPanel, mode: str = "constant", k=None,
                  h_star: float = None, qmax: int = 8,
                  spec: KernelSpec = EPANECHNIKOV):
    """Remove the estimated common component, returning (panel, k).

    With k=None the count is chosen by the information criterion; k=0 is a
    passthrough that returns the input values unchanged.
    """
    if k == 0:
        return TimeSeriesPanel(values=Z.values, names=Z.names), 0
    if k is None:
        k, _ = select_num_factors(Z, mode=mode, qmax=qmax, h_star=h_star, spec=spec)
    resid = _idiosyncratic(Z, int(k), mode, h_star, spec)
    return TimeSeriesPanel(values=resid, names=Z.names), int(k)
