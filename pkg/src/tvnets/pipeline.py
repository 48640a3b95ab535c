"""End-to-end estimation and the Monte-Carlo benchmark harness.

The per-response estimation stages share one kernel-weighted Gram cache: the
lagged design is identical across responses, so the expensive per-point Gram
blocks are built once and every response reuses them for stage 1, stage 2,
and the unpenalised comparators.

The benchmark runner generates seeded scenario replications, runs any subset
of the estimators, scores them against the simulation truth, and aggregates
mean/standard-deviation tables.  Replication failures (for example the
per-point least-squares fit on a window that cannot identify the full
coefficient vector) are logged and excluded from the averages.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import TvnetsError, ValidationError
from .factors import factor_adjust
from .kernels import EPANECHNIKOV, KernelSpec, default_bandwidths
from .localgram import LocalGramCache
from .metrics import (
    average_r2,
    classification_metrics,
    estimation_error_A,
    estimation_error_Omega,
    granger_universe,
    partial_universe,
    rmse_innovations,
)
from .networks import NetworkEstimate, granger_edges, partial_corr_edges
from .panel import TimeSeriesPanel, build_lagged_design
from .simulate import ScenarioSpec, ScenarioTruth, generate
from .tvclime import PrecisionPath, ResidualPanel, precision_path, residuals
from .tvlasso import CoefficientPath, path_from_cache
from .wglasso import fit_full, fit_oracle, gic_select_lambda2

__all__ = [
    "EstimateResult",
    "shared_gram_cache",
    "estimate_coefficients",
    "estimate",
    "granger_evidence",
    "partial_evidence",
    "run_replication",
    "run_benchmark",
    "BENCHMARK_METHODS",
]

BENCHMARK_METHODS = ("wglasso", "oracle", "full", "clime", "infeasible-clime")


@dataclass(frozen=True)
class EstimateResult:
    """Everything the full pipeline produces for one panel."""

    paths: list                       # stage-2 coefficient paths, one per response
    residual_panel: ResidualPanel
    precision: PrecisionPath
    network: NetworkEstimate
    p: int
    h: float
    b: float
    lambda2: np.ndarray = None        # (d,) selected stage-2 penalties
    factor_mode: str = "none"
    factor_k: int = 0
    prelim: list = field(default=None, repr=False)
    gic: list = field(default=None, repr=False)   # per-response criterion tables


def shared_gram_cache(panel: TimeSeriesPanel, p: int, h: float,
                      spec: KernelSpec = EPANECHNIKOV) -> LocalGramCache:
    """One Gram cache over all responses; the lagged design is response-free."""
    design0 = build_lagged_design(panel, 0, p)
    eval_grid = panel.grid
    return LocalGramCache(design0.regressors, panel.values[p:, :], design0.grid,
                          eval_grid, h, spec, n_norm=panel.n)


def _oracle_supports(truth: ScenarioTruth, i: int):
    """Columns whose lag-1 coefficient path for response i is not identically
    zero; the oracle fits exactly these and nothing else."""
    support = np.flatnonzero(np.any(truth.A1[:, i, :] != 0.0, axis=0))
    return support, support


def estimate_coefficients(panel: TimeSeriesPanel, p: int, h: float,
                          method: str = "wglasso", gamma: float = 1.0,
                          truth: ScenarioTruth = None,
                          spec: KernelSpec = EPANECHNIKOV,
                          cache: LocalGramCache = None, log=None):
    """Coefficient paths for every response under one estimator.

    Returns (paths, info); info carries per-response tuning for the
    penalised method and is empty for the comparators.
    """
    if method not in ("wglasso", "oracle", "full"):
        raise ValidationError(f"unknown coefficient method {method!r}")
    if method == "oracle":
        if truth is None:
            raise ValidationError("the oracle comparator needs the simulation truth")
        if p != 1:
            raise ValidationError("the oracle comparator is defined for lag order 1")
    if cache is None:
        cache = shared_gram_cache(panel, p, h, spec)
    d = panel.d
    paths = []
    lam2s = np.full(d, np.nan)
    prelims = [] if method == "wglasso" else None
    gic_tables = [] if method == "wglasso" else None
    for i in range(d):
        design = build_lagged_design(panel, i, p)
        if method == "wglasso":
            prelim = path_from_cache(cache, i, p)
            lam2, path, gic = gic_select_lambda2(design, prelim, h, gamma=gamma,
                                                 spec=spec, cache=cache)
            lam2s[i] = lam2
            prelims.append(prelim)
            gic_tables.append(gic)
        elif method == "oracle":
            level, deriv = _oracle_supports(truth, i)
            path = fit_oracle(design, h, level, deriv, spec=spec, cache=cache)
        else:
            path = fit_full(design, h, spec=spec, cache=cache)
        paths.append(path)
        if log is not None:
            log(f"response {i + 1}/{d} done ({method})")
    info = ({"lambda2": lam2s, "prelim": prelims, "gic": gic_tables}
            if method == "wglasso" else {})
    return paths, info


def estimate(panel: TimeSeriesPanel, p: int = 1, h: float = None, b: float = None,
             gamma: float = 1.0, factor_mode: str = "none", factor_k=None,
             h_star: float = None, lambda3=None, lambda3_grid=None,
             spec: KernelSpec = EPANECHNIKOV, log=None) -> EstimateResult:
    """Full pipeline: optional factor adjustment, the two coefficient stages,
    the precision stage, and network extraction."""
    if p < 1:
        raise ValidationError(f"lag order must be >= 1, got {p}")
    bw = default_bandwidths(panel.n, panel.d)
    h = bw.h if h is None else float(h)
    b = bw.b if b is None else float(b)
    k_used = 0
    if factor_mode != "none":
        h_star = bw.h_star if h_star is None else float(h_star)
        panel, k_used = factor_adjust(panel, mode=factor_mode, k=factor_k, h_star=h_star)
        if log is not None:
            log(f"factor adjustment removed {k_used} factor(s) ({factor_mode})")
    cache = shared_gram_cache(panel, p, h, spec)
    paths, info = estimate_coefficients(panel, p, h, method="wglasso", gamma=gamma,
                                        spec=spec, cache=cache, log=log)
    res = residuals(panel, paths, p)
    prec = precision_path(res, b, grid=lambda3_grid, lambda3=lambda3, spec=spec)
    if log is not None:
        log("precision stage done")
    network = NetworkEstimate(
        granger=granger_edges(paths, panel.d),
        partial=partial_corr_edges(prec),
        d=panel.d,
        provenance={"p": p, "h": h, "b": b, "factor_mode": factor_mode, "factor_k": k_used},
    )
    return EstimateResult(paths=paths, residual_panel=res, precision=prec,
                          network=network, p=p, h=h, b=b, lambda2=info["lambda2"],
                          factor_mode=factor_mode, factor_k=k_used,
                          prelim=info["prelim"], gic=info["gic"])


def granger_evidence(paths, d: int) -> np.ndarray:
    """Edge statistic matrix: max over grid and lags of |coefficient|."""
    ev = np.zeros((d, d))
    for path in paths:
        i = path.response_index
        p = path.lag_order
        amax = np.abs(path.estimates).max(axis=0)
        for k in range(p):
            ev[i] = np.maximum(ev[i], amax[k * d:(k + 1) * d])
    return ev


def partial_evidence(prec: PrecisionPath) -> np.ndarray:
    """Edge statistic matrix: max over the grid of |precision entry|."""
    return np.abs(prec.matrices).max(axis=0)


# -- benchmark harness ------------------------------------------------------


def _coef_record(paths, res: ResidualPanel, panel: TimeSeriesPanel,
                 truth: ScenarioTruth, p: int, classify: bool) -> dict:
    rec = {
        "EE_A": estimation_error_A(paths, truth.A1),
        "RMSE_e": rmse_innovations(res.values, truth.innovations[p:]),
        "avgR2": average_r2(panel.values[p:], res.values),
    }
    if classify:
        cls = classification_metrics(granger_edges(paths, panel.d),
                                     truth.granger_edges, granger_universe(panel.d))
        rec.update(TP=cls.counts.TP, FP=cls.counts.FP, FN=cls.counts.FN,
                   TN=cls.counts.TN, TPR=cls.TPR, TNR=cls.TNR, PPV=cls.PPV,
                   NPV=cls.NPV, F1=cls.F1, MCC=cls.MCC)
    return rec


def _prec_record(prec: PrecisionPath, truth: ScenarioTruth, p: int, d: int) -> dict:
    cls = classification_metrics(partial_corr_edges(prec), truth.partial_edges,
                                 partial_universe(d))
    return {
        "EE_Omega": estimation_error_Omega(prec.matrices, truth.Omega[p:]),
        "TP": cls.counts.TP, "FP": cls.counts.FP, "FN": cls.counts.FN,
        "TN": cls.counts.TN, "TPR": cls.TPR, "TNR": cls.TNR, "PPV": cls.PPV,
        "NPV": cls.NPV, "F1": cls.F1, "MCC": cls.MCC,
    }


def run_replication(example: int, d: int, n: int, seed: int, replication: int,
                    methods=BENCHMARK_METHODS, p: int = 1, h: float = None,
                    b: float = None, gamma: float = 1.0, factor_mode: str = "none",
                    factor_k=None, h_star: float = None, lambda3=None,
                    spec: KernelSpec = EPANECHNIKOV, log=None):
    """One seeded replication; returns {method: record-or-error-string}.

    A method failing with a numerical error yields an error string so the
    aggregator can exclude it; anything else propagates.
    """
    unknown = set(methods) - set(BENCHMARK_METHODS)
    if unknown:
        raise ValidationError(f"unknown benchmark methods: {sorted(unknown)}")
    scen = ScenarioSpec(example=example, d=d, n=n, seed=seed, replication=replication)
    panel, truth = generate(scen)
    if factor_mode != "none":
        h_star_use = default_bandwidths(panel.n, panel.d).h_star if h_star is None else h_star
        panel, _ = factor_adjust(panel, mode=factor_mode, k=factor_k, h_star=h_star_use)
    bw = default_bandwidths(panel.n, panel.d)
    h = bw.h if h is None else float(h)
    b = bw.b if b is None else float(b)
    out = {}
    cache = None
    wg_paths = None
    wg_res = None
    for method in methods:
        try:
            if method in ("wglasso", "clime"):
                if wg_paths is None:
                    if cache is None:
                        cache = shared_gram_cache(panel, p, h, spec)
                    wg_paths, _ = estimate_coefficients(panel, p, h, method="wglasso",
                                                        gamma=gamma, spec=spec,
                                                        cache=cache, log=log)
                    wg_res = residuals(panel, wg_paths, p)
                if method == "wglasso":
                    out[method] = _coef_record(wg_paths, wg_res, panel, truth, p, True)
                else:
                    prec = precision_path(wg_res, b, lambda3=lambda3, spec=spec)
                    out[method] = _prec_record(prec, truth, p, d)
            elif method in ("oracle", "full"):
                if cache is None:
                    cache = shared_gram_cache(panel, p, h, spec)
                paths, _ = estimate_coefficients(panel, p, h, method=method,
                                                 truth=truth, spec=spec,
                                                 cache=cache, log=log)
                res = residuals(panel, paths, p)
                out[method] = _coef_record(paths, res, panel, truth, p,
                                           classify=(method == "oracle"))
            else:  # infeasible-clime: smooth the realized innovations directly
                grid = panel.grid[p:]
                res = ResidualPanel(values=truth.innovations[p:].copy(), grid=grid,
                                    lag_order=p, n=panel.n, stage="oracle")
                prec = precision_path(res, b, lambda3=lambda3, spec=spec)
                out[method] = _prec_record(prec, truth, p, d)
        except TvnetsError as exc:
            out[method] = f"{type(exc).__name__}: {exc}"
        if log is not None and method in out:
            log(f"rep {replication}: {method} "
                + ("failed" if isinstance(out[method], str) else "done"))
    return out


def run_benchmark(example: int, d: int, n: int, seed: int, reps: int,
                  methods=BENCHMARK_METHODS, threads: int = 1, log=None,
                  **kwargs):
    """Seeded Monte-Carlo study; returns (rows, detail).

    ``rows`` holds one mean-per-cell dict per method, keyed by
    (example, d, n, method) and carrying the replication counts;
    ``detail`` maps methods to per-replication records and failures.
    """
    if reps < 1:
        raise ValidationError(f"need at least one replication, got {reps}")
    methods = tuple(methods)

    def one(rep: int):
        return run_replication(example, d, n, seed, rep, methods=methods,
                               log=log, **kwargs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(reps)))
    else:
        results = [one(rep) for rep in range(reps)]

    rows = []
    detail = {}
    for method in methods:
        records = []
        failures = []
        for rep, res in enumerate(results):
            r = res[method]
            if isinstance(r, str):
                failures.append({"replication": rep, "error": r})
                if log is not None:
                    log(f"excluded rep {rep} for {method}: {r}")
            else:
                records.append(r)
        row = {"example": example, "d": d, "n": n, "method": method,
               "reps": reps, "reps_used": len(records), "failures": len(failures)}
        if records:
            keys = sorted({k for r in records for k in r})
            for key in keys:
                vals = np.array([float(r[key]) for r in records if key in r])
                row[key] = float(vals.mean())
                row[f"{key}_sd"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        rows.append(row)
        detail[method] = {"records": records, "failures": failures}
    return rows, detail
