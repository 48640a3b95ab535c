"""Evaluation measures: support-recovery classification and estimation error.

Granger edges are scored over all d^2 ordered pairs including the diagonal;
partial-correlation edges over the d(d-1)/2 unordered off-diagonal pairs.
Rates with zero denominators report 0, except that perfect recovery of an
empty graph scores F1 = MCC = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ValidationError

__all__ = [
    "ConfusionCounts",
    "ClassificationRecord",
    "ErrorReport",
    "granger_universe",
    "partial_universe",
    "classification_metrics",
    "estimation_error_A",
    "estimation_error_Omega",
    "rmse_innovations",
    "average_r2",
    "aggregate",
]


@dataclass(frozen=True)
class ConfusionCounts:
    TP: int
    FP: int
    FN: int
    TN: int


@dataclass(frozen=True)
class ClassificationRecord:
    counts: ConfusionCounts
    TPR: float
    TNR: float
    PPV: float
    NPV: float
    F1: float
    MCC: float


@dataclass(frozen=True)
class ErrorReport:
    EE_A: float = None
    RMSE_e: float = None
    EE_Omega: float = None
    avgR2: float = None


def granger_universe(d: int) -> frozenset:
    """All ordered pairs including self-edges."""
    return frozenset((i, j) for i in range(d) for j in range(d))


def partial_universe(d: int) -> frozenset:
    """All unordered off-diagonal pairs, stored with i < j."""
    return frozenset((i, j) for i in range(d) for j in range(i + 1, d))


def _rate(num: int, den: int) -> float:
    return num / den if den > 0 else 0.0


def classification_metrics(est, truth, universe) -> ClassificationRecord:
    est = frozenset(est)
    truth = frozenset(truth)
    universe = frozenset(universe)
    if not est <= universe or not truth <= universe:
        raise ValidationError("edge sets must be subsets of the pair universe")
    tp = len(est & truth)
    fp = len(est - truth)
    fn = len(truth - est)
    tn = len(universe) - tp - fp - fn
    tpr = _rate(tp, tp + fn)
    tnr = _rate(tn, tn + fp)
    ppv = _rate(tp, tp + fp)
    npv = _rate(tn, tn + fn)
    if tp + fp + fn == 0:
        f1 = 1.0
        mcc = 1.0
    else:
        f1 = 2.0 * ppv * tpr / (ppv + tpr) if ppv + tpr > 0 else 0.0
        denom = math.sqrt(float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
        mcc = (tp * tn - fp * fn) / denom if denom > 0 else 0.0
    return ClassificationRecord(
        counts=ConfusionCounts(TP=tp, FP=fp, FN=fn, TN=tn),
        TPR=tpr, TNR=tnr, PPV=ppv, NPV=npv, F1=f1, MCC=mcc,
    )


def estimation_error_A(est_paths, true_A1) -> float:
    """Average scaled Frobenius error of the lag-1 coefficient matrices:
    (1 / (n sqrt(d))) sum_t ||A1_hat(tau_t) - A1(tau_t)||_F."""
    true_A1 = np.asarray(true_A1, dtype=float)
    n, d = true_A1.shape[0], true_A1.shape[1]
    est = np.empty_like(true_A1)
    if len(est_paths) != d:
        raise ValidationError(f"need {d} paths, got {len(est_paths)}")
    for path in est_paths:
        if path.estimates.shape[0] != n:
            raise ValidationError("path grid length does not match the truth")
        est[:, path.response_index, :] = path.estimates[:, :d]
    diffs = np.linalg.norm((est - true_A1).reshape(n, -1), axis=1)
    return float(diffs.sum() / (n * math.sqrt(d)))


def estimation_error_Omega(est_mats, true_Omega) -> float:
    """Same scaled Frobenius average for the precision matrices."""
    est_mats = np.asarray(est_mats, dtype=float)
    true_Omega = np.asarray(true_Omega, dtype=float)
    if est_mats.shape != true_Omega.shape:
        raise ValidationError(
            f"shape mismatch {est_mats.shape} vs {true_Omega.shape}"
        )
    n, d = true_Omega.shape[0], true_Omega.shape[1]
    diffs = np.linalg.norm((est_mats - true_Omega).reshape(n, -1), axis=1)
    return float(diffs.sum() / (n * math.sqrt(d)))


def rmse_innovations(est_resid, true_innov) -> float:
    """Root mean squared error of the fitted innovations over matching rows."""
    est_resid = np.asarray(est_resid, dtype=float)
    true_innov = np.asarray(true_innov, dtype=float)
    if est_resid.shape != true_innov.shape:
        raise ValidationError(
            f"shape mismatch {est_resid.shape} vs {true_innov.shape}"
        )
    diff = est_resid - true_innov
    return float(np.sqrt(np.mean(diff * diff)))


def average_r2(responses, residuals) -> float:
    """Mean over series of 1 - SSE / total sum of squares about the mean."""
    Y = np.asarray(responses, dtype=float)
    E = np.asarray(residuals, dtype=float)
    if Y.shape != E.shape:
        raise ValidationError(f"shape mismatch {Y.shape} vs {E.shape}")
    sse = np.sum(E * E, axis=0)
    tss = np.sum((Y - Y.mean(axis=0)) ** 2, axis=0)
    r2 = np.where(tss > 0, 1.0 - sse / np.where(tss > 0, tss, 1.0), 0.0)
    return float(r2.mean())


def aggregate(records):
    """Mean and standard deviation of each numeric field across replications.

    Records may be ClassificationRecord, ErrorReport, or plain dicts; returns
    {field: (mean, std)} over non-missing values, with a deterministic
    left-to-right reduction.
    """
    records = list(records)
    if not records:
        raise ValidationError("need at least one replication record")
    rows = []
    for rec in records:
        if isinstance(rec, dict):
            rows.append({k: v for k, v in rec.items() if isinstance(v, (int, float))})
        elif isinstance(rec, ClassificationRecord):
            rows.append({f.name: getattr(rec, f.name) for f in fields(rec)
                         if f.name != "counts"})
        else:
            rows.append({f.name: getattr(rec, f.name) for f in fields(rec)
                         if isinstance(getattr(rec, f.name), (int, float))})
    keys = sorted({k for row in rows for k in row if row.get(k) is not None})
    out = {}
    for key in keys:
        vals = np.array([row[key] for row in rows if row.get(key) is not None],
                        dtype=float)
        std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        out[key] = (float(vals.mean()), std)
    return out
