"""On-disk artifact formats: path containers, manifests, metric reports.

Coefficient and precision paths have two interchangeable representations: a
CSV form for external tooling and a compact binary container for exact
round trips.  Every artifact directory carries a JSON manifest holding the
run configuration verbatim plus all format versions, which is enough to
reproduce the artifacts bit for bit.

Binary layouts (all integers little-endian, all floats IEEE float64):

coefficient path container (magic ``TVNPATH1``):
    magic 8s | n_eval u64 | m u64 | lag_order u64 | response_index i64 |
    stage 16s (ascii, zero-padded) | flags u8 (bit 0: tuning present) |
    estimates (n_eval*m f64, row-major) | derivatives (n_eval*m f64) |
    [tuning (n_eval f64)]

precision path container (magic ``TVNPREC1``):
    magic 8s | n_eval u64 | d u64 | flags u8 (bit 0: raw, bit 1: feasibility) |
    eval_grid (n_eval f64) | lambdas (n_eval f64) |
    matrices (n_eval*d*d f64, row-major) | [raw] | [feasibility]
"""

from __future__ import annotations

import csv
import json
import struct

import numpy as np

from .errors import DataFormatError, ValidationError
from .tvclime import PrecisionPath
from .tvlasso import CoefficientPath

__all__ = [
    "FORMAT_VERSIONS",
    "save_coefficient_path",
    "load_coefficient_path",
    "save_coefficient_csv",
    "save_precision_path",
    "load_precision_path",
    "save_precision_csv",
    "save_stage2_summary",
    "write_manifest",
    "read_manifest",
    "write_metric_csv",
    "write_metric_json",
]

PATH_MAGIC = b"TVNPATH1"
PREC_MAGIC = b"TVNPREC1"
FORMAT_VERSIONS = {
    "coefficient-path": 1,
    "precision-path": 1,
    "manifest": 1,
    "metric-report": 1,
    "truth-container": 1,
}

_PATH_HEADER = struct.Struct("<8sQQQq16sB")
_PREC_HEADER = struct.Struct("<8sQQB")


def save_coefficient_path(path: CoefficientPath, file) -> None:
    """Write one response's coefficient path as a binary container."""
    n_eval, m = path.estimates.shape
    stage = path.stage.encode("ascii")
    if len(stage) > 16:
        raise ValidationError(f"stage tag too long for the container: {path.stage!r}")
    flags = 1 if path.tuning is not None else 0
    with open(file, "wb") as fh:
        fh.write(_PATH_HEADER.pack(PATH_MAGIC, n_eval, m, path.lag_order,
                                   path.response_index, stage.ljust(16, b"\0"), flags))
        fh.write(np.ascontiguousarray(path.estimates, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(path.derivatives, dtype="<f8").tobytes())
        if flags & 1:
            fh.write(np.ascontiguousarray(path.tuning, dtype="<f8").tobytes())


def load_coefficient_path(file) -> CoefficientPath:
    with open(file, "rb") as fh:
        head = fh.read(_PATH_HEADER.size)
        if len(head) < _PATH_HEADER.size:
            raise DataFormatError(f"truncated coefficient container: {file}")
        magic, n_eval, m, p, i, stage, flags = _PATH_HEADER.unpack(head)
        if magic != PATH_MAGIC:
            raise DataFormatError(f"bad magic in {file}: {magic!r}")
        body = np.frombuffer(fh.read(), dtype="<f8")
    want = 2 * n_eval * m + (n_eval if flags & 1 else 0)
    if body.size != want:
        raise DataFormatError(f"container body has {body.size} doubles, expected {want}")
    est = body[: n_eval * m].reshape(n_eval, m).copy()
    der = body[n_eval * m : 2 * n_eval * m].reshape(n_eval, m).copy()
    tuning = body[2 * n_eval * m :].copy() if flags & 1 else None
    return CoefficientPath(
        estimates=est, derivatives=der, response_index=int(i),
        lag_order=int(p), stage=stage.rstrip(b"\0").decode("ascii"), tuning=tuning,
    )


def save_coefficient_csv(path: CoefficientPath, file) -> None:
    """CSV form: one row per grid point, level columns then derivative columns."""
    m = path.estimates.shape[1]
    header = [f"a{j + 1}" for j in range(m)] + [f"da{j + 1}" for j in range(m)]
    with open(file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for est_row, der_row in zip(path.estimates, path.derivatives):
            writer.writerow([repr(float(v)) for v in est_row]
                            + [repr(float(v)) for v in der_row])


def save_precision_path(prec: PrecisionPath, file) -> None:
    n_eval, d = prec.matrices.shape[0], prec.matrices.shape[1]
    flags = (1 if prec.raw is not None else 0) | (2 if prec.feasibility is not None else 0)
    with open(file, "wb") as fh:
        fh.write(_PREC_HEADER.pack(PREC_MAGIC, n_eval, d, flags))
        fh.write(np.ascontiguousarray(prec.eval_grid, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(prec.lambdas, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(prec.matrices, dtype="<f8").tobytes())
        if flags & 1:
            fh.write(np.ascontiguousarray(prec.raw, dtype="<f8").tobytes())
        if flags & 2:
            fh.write(np.ascontiguousarray(prec.feasibility, dtype="<f8").tobytes())


def load_precision_path(file) -> PrecisionPath:
    with open(file, "rb") as fh:
        head = fh.read(_PREC_HEADER.size)
        if len(head) < _PREC_HEADER.size:
            raise DataFormatError(f"truncated precision container: {file}")
        magic, n_eval, d, flags = _PREC_HEADER.unpack(head)
        if magic != PREC_MAGIC:
            raise DataFormatError(f"bad magic in {file}: {magic!r}")
        body = np.frombuffer(fh.read(), dtype="<f8")
    block = n_eval * d * d
    want = 2 * n_eval + block + (block if flags & 1 else 0) + (n_eval if flags & 2 else 0)
    if body.size != want:
        raise DataFormatError(f"container body has {body.size} doubles, expected {want}")
    pos = 0
    eval_grid = body[pos : pos + n_eval].copy(); pos += n_eval
    lambdas = body[pos : pos + n_eval].copy(); pos += n_eval
    mats = body[pos : pos + block].reshape(n_eval, d, d).copy(); pos += block
    raw = None
    if flags & 1:
        raw = body[pos : pos + block].reshape(n_eval, d, d).copy(); pos += block
    feas = body[pos : pos + n_eval].copy() if flags & 2 else None
    return PrecisionPath(matrices=mats, lambdas=lambdas, eval_grid=eval_grid,
                         raw=raw, feasibility=feas)


def save_precision_csv(prec: PrecisionPath, directory) -> list:
    """One d x d CSV per grid point; returns the list of files written."""
    import os

    written = []
    width = len(str(prec.matrices.shape[0]))
    for s in range(prec.matrices.shape[0]):
        file = os.path.join(directory, f"precision_{s + 1:0{width}d}.csv")
        with open(file, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"tau={float(prec.eval_grid[s])!r}",
                             f"lambda3={float(prec.lambdas[s])!r}"])
            for row in prec.matrices[s]:
                writer.writerow([repr(float(v)) for v in row])
        written.append(file)
    return written


def save_stage2_summary(file, response_index: int, lambda2: float, path: CoefficientPath,
                        gic_values) -> None:
    """Per-response tuning summary: selected penalty, active groups, criterion table."""
    active = np.flatnonzero(np.any(path.estimates != 0.0, axis=0))
    payload = {
        "response_index": int(response_index),
        "lambda2": float(lambda2),
        "active_groups": [int(j) for j in active],
        "gic_values": [None if not np.isfinite(v) else float(v) for v in np.asarray(gic_values)],
    }
    with open(file, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(file, config: dict, seed=None, artifacts=None, extra: dict = None) -> None:
    """Reproducibility manifest: config verbatim, seed, format versions."""
    payload = {
        "format_versions": dict(FORMAT_VERSIONS),
        "config": config,
        "seed": seed,
        "artifacts": sorted(artifacts) if artifacts else [],
    }
    if extra:
        payload.update(extra)
    with open(file, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def read_manifest(file) -> dict:
    with open(file, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_metric_csv(rows, file) -> None:
    """Flat metric table; one row per (example, d, n, method) cell group."""
    rows = list(rows)
    if not rows:
        raise ValidationError("no metric rows to write")
    keys = ["example", "d", "n", "method"]
    extra = sorted({k for row in rows for k in row if k not in keys})
    with open(file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys + extra)
        for row in rows:
            out = [row.get(k, "") for k in keys]
            for k in extra:
                v = row.get(k, "")
                if isinstance(v, bool):
                    out.append(str(v))
                elif isinstance(v, (int, np.integer)):
                    out.append(str(int(v)))
                elif isinstance(v, (float, np.floating)):
                    out.append(repr(float(v)))
                else:
                    out.append(v)
            writer.writerow(out)


def write_metric_json(rows, file, extra: dict = None) -> None:
    payload = {"format_version": FORMAT_VERSIONS["metric-report"], "rows": list(rows)}
    if extra:
        payload.update(extra)
    with open(file, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
