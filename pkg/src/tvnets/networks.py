"""Uniform network construction from estimated paths.

A directed Granger edge (i, j) exists when some lag's coefficient path from
series j to series i is not identically zero over the grid; an undirected
partial-correlation edge exists when a precision entry reaches the selected
constraint level somewhere on the grid.  Also houses the ratio criterion for
choosing the VAR order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .kernels import EPANECHNIKOV, KernelSpec, default_bandwidths
from .panel import TimeSeriesPanel, build_lagged_design
from .tvclime import PrecisionPath
from .tvlasso import preliminary_path
from .wglasso import gic_select_lambda2

__all__ = [
    "NetworkEstimate",
    "granger_edges",
    "partial_corr_edges",
    "select_var_order",
    "lag_norm_totals",
    "order_ratios",
    "write_edge_csv",
    "write_profile_csv",
]

KMAX_DEFAULT = 10
XI_A_DEFAULT = 0.1


@dataclass(frozen=True)
class NetworkEstimate:
    """Directed and undirected edge sets over d nodes."""

    granger: frozenset        # ordered (i, j); self-edges allowed
    partial: frozenset        # unordered (i, j) stored with i < j
    d: int
    provenance: dict = None


def granger_edges(paths, d: int = None) -> frozenset:
    """Directed edges from exact-zero coefficient paths.

    Edge (i, j) is present iff some lag k has a nonzero coefficient of
    series j at some grid point in the equation for series i.
    """
    if not paths:
        raise ValidationError("no coefficient paths supplied")
    if d is None:
        d = len(paths)
    edges = set()
    for path in paths:
        if path.stage == "full":
            raise ValidationError(
                "per-point least-squares paths have no exact zeros; "
                "threshold the coefficients explicitly before building edges"
            )
        i = path.response_index
        p = path.lag_order
        if path.estimates.shape[1] != p * d:
            raise ValidationError(
                f"path for response {i} has {path.estimates.shape[1]} columns, "
                f"expected {p * d}"
            )
        nonzero = np.any(path.estimates != 0.0, axis=0)
        for k in range(p):
            for j in np.flatnonzero(nonzero[k * d:(k + 1) * d]):
                edges.add((i, int(j)))
    return frozenset(edges)


def partial_corr_edges(prec: PrecisionPath) -> frozenset:
    """Undirected edges where a precision entry reaches the per-point level."""
    mats = prec.matrices
    lams = prec.lambdas[:, None, None]
    hit = np.any(np.abs(mats) >= lams, axis=0)
    d = mats.shape[1]
    edges = set()
    for i in range(d):
        for j in range(i + 1, d):
            if hit[i, j] or hit[j, i]:
                edges.add((i, j))
    return frozenset(edges)


def lag_norm_totals(paths, d: int, p: int, xi_a: float = XI_A_DEFAULT) -> np.ndarray:
    """Per-lag totals sum_t max(||A_l(tau_t)||_F, xi_a) from per-response paths."""
    n = paths[0].estimates.shape[0]
    sq = np.zeros((n, p))
    for path in paths:
        est = path.estimates
        for k in range(p):
            block = est[:, k * d:(k + 1) * d]
            sq[:, k] += np.sum(block * block, axis=1)
    norms = np.sqrt(sq)
    return np.maximum(norms, xi_a).sum(axis=0)


def order_ratios(totals, kmax: int) -> np.ndarray:
    """Ratio criterion R(k) = tail sum from k over tail sum from k+1."""
    totals = np.asarray(totals, dtype=float)
    if totals.size < 2 * kmax:
        raise ValidationError(
            f"need totals for {2 * kmax} lags, got {totals.size}"
        )
    tails = np.concatenate([np.cumsum(totals[::-1])[::-1], [0.0]])
    ratios = np.empty(kmax)
    for k in range(1, kmax + 1):
        denom = tails[k]
        if denom <= 0.0:
            raise ValidationError(f"zero tail sum at lag {k + 1}")
        ratios[k - 1] = tails[k - 1] / denom
    return ratios


def select_var_order(panel: TimeSeriesPanel, kmax: int = KMAX_DEFAULT,
                     xi_a: float = XI_A_DEFAULT, h: float = None,
                     gamma: float = 1.0, spec: KernelSpec = EPANECHNIKOV):
    """Choose the VAR order by the lag-norm ratio criterion.

    Fits the two-stage estimator with 2*kmax lags and returns
    (p_hat, ratios); ties prefer the smaller order.
    """
    if kmax < 1:
        raise ValidationError(f"kmax must be at least 1, got {kmax}")
    p_fit = 2 * kmax
    if h is None:
        h = default_bandwidths(panel.n, panel.d).h
    paths = []
    for i in range(panel.d):
        design = build_lagged_design(panel, i, p_fit)
        prelim = preliminary_path(design, h, spec=spec)
        _, path, _ = gic_select_lambda2(design, prelim, h, gamma=gamma, spec=spec)
        paths.append(path)
    totals = lag_norm_totals(paths, panel.d, p_fit, xi_a)
    ratios = order_ratios(totals, kmax)
    p_hat = int(np.argmax(ratios)) + 1
    return p_hat, ratios


def write_edge_csv(est: NetworkEstimate, path, granger_evidence=None,
                   partial_evidence=None):
    """Sorted edge list: src, dst, type, evidence (max statistic over the grid)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "type", "evidence"])
        for i, j in sorted(est.granger):
            ev = "" if granger_evidence is None else repr(float(granger_evidence[i, j]))
            writer.writerow([i + 1, j + 1, "granger", ev])
        for i, j in sorted(est.partial):
            ev = "" if partial_evidence is None else repr(float(partial_evidence[i, j]))
            writer.writerow([i + 1, j + 1, "partial", ev])


def write_profile_csv(path, grid, profiles, header):
    """Per-edge time profiles: t, tau, then one column per tracked edge."""
    grid = np.asarray(grid, dtype=float)
    profiles = np.asarray(profiles, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "tau"] + list(header))
        for r in range(grid.size):
            writer.writerow([r + 1, repr(float(grid[r]))]
                            + [repr(float(v)) for v in profiles[r]])
