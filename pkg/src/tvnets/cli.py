"""Command-line orchestration of the estimation pipeline and benchmarks.

Every subcommand resolves its configuration from flags plus an optional TOML
file (flags win), validates it, runs the pure library routines, and writes
the artifacts together with a manifest holding the resolved configuration
verbatim.  Progress goes to standard error; data only to files.

Exit codes: 0 success, 1 validation, 2 numeric/convergence, 3 I/O.
"""

from __future__ import annotations

import json
import os
import shutil
import sys

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import serialize
from .errors import (
    DataFormatError,
    MissingDataError,
    NumericError,
    TvnetsError,
    ValidationError,
)
from .factors import factor_adjust, local_pca, pca_factors, select_num_factors
from .kernels import default_bandwidths
from .metrics import (
    classification_metrics,
    estimation_error_A,
    estimation_error_Omega,
    granger_universe,
    partial_universe,
)
from .networks import (
    KMAX_DEFAULT,
    XI_A_DEFAULT,
    NetworkEstimate,
    granger_edges,
    partial_corr_edges,
    select_var_order,
    write_edge_csv,
    write_profile_csv,
)
from .panel import load_panel, save_panel
from .pipeline import (
    BENCHMARK_METHODS,
    estimate,
    granger_evidence,
    partial_evidence,
    run_benchmark,
)
from .simulate import ScenarioSpec, generate

# usage errors are configuration errors
click.UsageError.exit_code = 1

_TRUTH_ARRAYS = ("A1", "Omega", "innovations", "factors", "loadings", "idiosyncratic")


def _log(msg: str) -> None:
    click.echo(msg, err=True)


class _Artifacts:
    """Tracks files written by one command so failures leave no partial output."""

    def __init__(self, out):
        self.root = os.path.abspath(out)
        self._created_root = not os.path.isdir(self.root)
        os.makedirs(self.root, exist_ok=True)
        self.files = []
        self._dirs = []

    def path(self, *rel) -> str:
        file = os.path.join(self.root, *rel)
        parent = os.path.dirname(file)
        if not os.path.isdir(parent):
            os.makedirs(parent, exist_ok=True)
            self._dirs.append(parent)
        self.files.append(file)
        return file

    def relative(self):
        return [os.path.relpath(f, self.root) for f in self.files]

    def cleanup(self) -> None:
        for file in self.files:
            try:
                os.remove(file)
            except OSError:
                pass
        for d in reversed(self._dirs):
            try:
                os.rmdir(d)
            except OSError:
                pass
        if self._created_root:
            try:
                os.rmdir(self.root)
            except OSError:
                pass


def _merged_config(ctx: click.Context, config_file, params: dict) -> dict:
    """Resolve flag/file precedence: explicit flags beat the file, the file
    beats defaults.  Unknown file keys are rejected."""
    cfg = dict(params)
    if config_file:
        try:
            with open(config_file, "rb") as fh:
                file_cfg = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"malformed config file {config_file}: {exc}") from None
        for key, val in file_cfg.items():
            name = key.replace("-", "_")
            if name not in params:
                raise ValidationError(f"unknown config key {key!r} in {config_file}")
            src = ctx.get_parameter_source(name)
            if src is not None and src.name == "COMMANDLINE":
                continue
            cfg[name] = val
    return cfg


def _execute(action, get_arts) -> None:
    """Run a command body with stage-attributed errors, cleanup, exit codes."""
    try:
        action()
    except (DataFormatError, MissingDataError) as exc:
        _fail(get_arts(), exc, 3)
    except ValidationError as exc:
        _fail(get_arts(), exc, 1)
    except NumericError as exc:
        _fail(get_arts(), exc, 2)
    except TvnetsError as exc:
        _fail(get_arts(), exc, 2)
    except OSError as exc:
        _fail(get_arts(), exc, 3)


def _fail(arts: _Artifacts, exc, code: int) -> None:
    if arts is not None:
        arts.cleanup()
    _log(f"error ({type(exc).__name__}): {exc}")
    sys.exit(code)


def _write_truth(arts: _Artifacts, truth, scen: ScenarioSpec) -> None:
    for name in _TRUTH_ARRAYS:
        arr = getattr(truth, name)
        if arr is not None:
            np.save(arts.path("truth", f"{name}.npy"), np.asarray(arr, dtype=float))
    meta = {
        "format_version": serialize.FORMAT_VERSIONS["truth-container"],
        "example": scen.example, "d": scen.d, "n": scen.n, "seed": scen.seed,
        "burn_in": scen.burn_in, "replication": scen.replication,
        "granger_edges": sorted([list(e) for e in truth.granger_edges]),
        "partial_edges": sorted([list(e) for e in truth.partial_edges]),
    }
    with open(arts.path("truth", "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_truth(directory):
    meta_file = os.path.join(directory, "truth", "meta.json")
    if not os.path.isfile(meta_file):
        meta_file = os.path.join(directory, "meta.json")
        directory = os.path.dirname(directory) or "."
    with open(meta_file, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    arrays = {}
    base = os.path.dirname(meta_file)
    for name in _TRUTH_ARRAYS:
        file = os.path.join(base, f"{name}.npy")
        arrays[name] = np.load(file) if os.path.isfile(file) else None
    return meta, arrays


def _resolve_factor_k(k, auto_k):
    if auto_k and k is not None:
        raise ValidationError("--k and --auto-k are mutually exclusive")
    return None if auto_k else k


def _resolve_order(p, auto_order):
    if auto_order and p is not None:
        raise ValidationError("--p and --auto-order are mutually exclusive")
    if not auto_order and p is None:
        p = 1
    return p


@click.group()
def main() -> None:
    """Time-varying Granger and partial-correlation network estimation."""


def _common_out(func):
    func = click.option("--out", required=True, type=click.Path(), help="Output directory.")(func)
    func = click.option("--config", "config_file", type=click.Path(exists=True),
                        help="TOML config file; explicit flags override it.")(func)
    return func


# -- simulate ----------------------------------------------------------------

@main.command()
@click.option("--example", type=int, default=1, show_default=True)
@click.option("--d", type=int, default=10, show_default=True)
@click.option("--n", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--burn-in", type=int, default=200, show_default=True)
@click.option("--replication", type=int, default=0, show_default=True)
@_common_out
@click.pass_context
def simulate(ctx, example, d, n, seed, burn_in, replication, out, config_file):
    """Generate one scenario replication: panel CSV plus a truth container."""
    params = {"subcommand": "simulate", "example": example, "d": d, "n": n,
              "seed": seed, "burn_in": burn_in, "replication": replication,
              "out": out}
    arts = None

    def action():
        nonlocal arts
        cfg = _merged_config(ctx, config_file, params)
        arts = _Artifacts(cfg["out"])
        scen = ScenarioSpec(example=cfg["example"], d=cfg["d"], n=cfg["n"],
                            seed=cfg["seed"], burn_in=cfg["burn_in"],
                            replication=cfg["replication"])
        panel, truth = generate(scen)
        save_panel(panel, arts.path("panel.csv"))
        _write_truth(arts, truth, scen)
        serialize.write_manifest(arts.path("manifest.json"), cfg, seed=cfg["seed"],
                                 artifacts=arts.relative())
        _log(f"simulated example {scen.example} (d={scen.d}, n={scen.n}) -> {arts.root}")

    _execute(action, lambda: arts)


# -- estimate ----------------------------------------------------------------

@main.command(name="estimate")
@click.option("--input", "input_file", required=True, type=click.Path(exists=True),
              help="Panel CSV.")
@click.option("--standardize", is_flag=True, default=False)
@click.option("--p", type=int, default=None, help="VAR lag order (default 1).")
@click.option("--auto-order", is_flag=True, default=False,
              help="Select the lag order by the ratio criterion.")
@click.option("--kmax", type=int, default=KMAX_DEFAULT, show_default=True)
@click.option("--xi-a", type=float, default=XI_A_DEFAULT, show_default=True)
@click.option("--h", type=float, default=None, help="Coefficient bandwidth.")
@click.option("--b", type=float, default=None, help="Covariance bandwidth.")
@click.option("--h-star", type=float, default=None, help="Local-PCA bandwidth.")
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--factor-mode", type=click.Choice(["none", "constant", "time-varying"]),
              default="none", show_default=True)
@click.option("--k", type=int, default=None, help="Number of factors to remove.")
@click.option("--auto-k", is_flag=True, default=False,
              help="Select the factor count by information criterion.")
@click.option("--lambda3", type=float, default=None,
              help="Fixed precision-stage constraint level (default: per-point selection).")
@_common_out
@click.pass_context
def cmd_estimate(ctx, input_file, standardize, p, auto_order, kmax, xi_a, h, b,
                 h_star, gamma, factor_mode, k, auto_k, lambda3, out, config_file):
    """Full pipeline: factor adjustment, both coefficient stages, the
    precision stage, and network extraction."""
    params = {"subcommand": "estimate", "input": input_file,
              "standardize": standardize, "p": p, "auto_order": auto_order,
              "kmax": kmax, "xi_a": xi_a, "h": h, "b": b, "h_star": h_star,
              "gamma": gamma, "factor_mode": factor_mode, "k": k,
              "auto_k": auto_k, "lambda3": lambda3, "out": out}
    arts = None

    def action():
        nonlocal arts
        cfg = _merged_config(ctx, config_file, params)
        arts = _Artifacts(cfg["out"])
        panel = load_panel(cfg["input"], standardize=cfg["standardize"])
        p_use = _resolve_order(cfg["p"], cfg["auto_order"])
        factor_k = _resolve_factor_k(cfg["k"], cfg["auto_k"])
        if cfg["auto_order"]:
            _log(f"selecting lag order (kmax={cfg['kmax']})")
            p_use, ratios = select_var_order(panel, kmax=cfg["kmax"],
                                             xi_a=cfg["xi_a"], h=cfg["h"],
                                             gamma=cfg["gamma"])
            _log(f"selected p={p_use}")
        result = estimate(panel, p=p_use, h=cfg["h"], b=cfg["b"],
                          gamma=cfg["gamma"], factor_mode=cfg["factor_mode"],
                          factor_k=factor_k, h_star=cfg["h_star"],
                          lambda3=cfg["lambda3"], log=_log)
        width = len(str(panel.d))
        for i, path in enumerate(result.paths):
            serialize.save_coefficient_path(path, arts.path(
                "coefficients", f"resp_{i + 1:0{width}d}.bin"))
            serialize.save_stage2_summary(
                arts.path("stage2", f"resp_{i + 1:0{width}d}.json"),
                i, result.lambda2[i], path, result.gic[i])
        serialize.save_precision_path(result.precision, arts.path("precision.bin"))
        write_edge_csv(result.network, arts.path("edges.csv"),
                       granger_evidence=granger_evidence(result.paths, panel.d),
                       partial_evidence=partial_evidence(result.precision))
        extra = {"selected": {"p": result.p, "h": result.h, "b": result.b,
                              "lambda2": result.lambda2.tolist(),
                              "factor_mode": result.factor_mode,
                              "factor_k": result.factor_k}}
        serialize.write_manifest(arts.path("manifest.json"), cfg,
                                 artifacts=arts.relative(), extra=extra)
        _log(f"estimate done -> {arts.root}")

    _execute(action, lambda: arts)


# -- factor-adjust -------------------------------------------------------------

@main.command(name="factor-adjust")
@click.option("--input", "input_file", required=True, type=click.Path(exists=True))
@click.option("--standardize", is_flag=True, default=False)
@click.option("--factor-mode", type=click.Choice(["constant", "time-varying"]),
              default="constant", show_default=True)
@click.option("--k", type=int, default=None)
@click.option("--auto-k", is_flag=True, default=False)
@click.option("--qmax", type=int, default=8, show_default=True)
@click.option("--h-star", type=float, default=None)
@_common_out
@click.pass_context
def cmd_factor_adjust(ctx, input_file, standardize, factor_mode, k, auto_k,
                      qmax, h_star, out, config_file):
    """Remove an estimated low-rank common component from a panel."""
    params = {"subcommand": "factor-adjust", "input": input_file,
              "standardize": standardize, "factor_mode": factor_mode, "k": k,
              "auto_k": auto_k, "qmax": qmax, "h_star": h_star, "out": out}
    arts = None

    def action():
        nonlocal arts
        cfg = _merged_config(ctx, config_file, params)
        arts = _Artifacts(cfg["out"])
        panel = load_panel(cfg["input"], standardize=cfg["standardize"])
        factor_k = _resolve_factor_k(cfg["k"], cfg["auto_k"])
        h_star_use = cfg["h_star"]
        if cfg["factor_mode"] == "time-varying" and h_star_use is None:
            h_star_use = default_bandwidths(panel.n, panel.d).h_star
        ic_table = None
        if factor_k is None:
            k_sel, table = select_num_factors(panel, mode=cfg["factor_mode"],
                                              qmax=cfg["qmax"], h_star=h_star_use)
            ic_table = [float(v) for v in table]
            factor_k = k_sel
        adjusted, k_used = factor_adjust(panel, mode=cfg["factor_mode"],
                                         k=factor_k, h_star=h_star_use,
                                         qmax=cfg["qmax"])
        save_panel(adjusted, arts.path("adjusted.csv"))
        if k_used > 0:
            if cfg["factor_mode"] == "constant":
                fit = pca_factors(panel, k_used)
                _write_matrix_csv(arts.path("factors.csv"), fit.factors,
                                  [f"f{c + 1}" for c in range(k_used)])
                _write_matrix_csv(arts.path("loadings.csv"), fit.loadings,
                                  [f"f{c + 1}" for c in range(k_used)])
            else:
                F = np.empty((panel.n, k_used))
                rows = []
                for t in range(panel.n):
                    fit = local_pca(panel, float(panel.grid[t]), h_star_use, k_used)
                    F[t] = fit.factors[t]
                    for j in range(panel.d):
                        rows.append([panel.grid[t], j + 1] + list(fit.loadings[j]))
                _write_matrix_csv(arts.path("factors.csv"), F,
                                  [f"f{c + 1}" for c in range(k_used)])
                _write_matrix_csv(arts.path("loadings.csv"), np.asarray(rows),
                                  ["tau", "series"] + [f"f{c + 1}" for c in range(k_used)])
        meta = {"k": int(k_used), "mode": cfg["factor_mode"],
                "h_star": h_star_use, "ic_table": ic_table}
        with open(arts.path("factor_meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        serialize.write_manifest(arts.path("manifest.json"), cfg,
                                 artifacts=arts.relative())
        _log(f"removed {k_used} factor(s) ({cfg['factor_mode']}) -> {arts.root}")

    _execute(action, lambda: arts)


def _write_matrix_csv(file, M, header) -> None:
    import csv as _csv

    with open(file, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(header)
        for row in np.asarray(M, dtype=float):
            writer.writerow([repr(float(v)) for v in row])


# -- networks ------------------------------------------------------------------

@main.command(name="networks")
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True),
              help="Artifact directory from the estimate subcommand.")
@click.option("--profiles/--no-profiles", default=False, show_default=True,
              help="Also write per-edge time profiles.")
@_common_out
@click.pass_context
def cmd_networks(ctx, input_dir, profiles, out, config_file):
    """Rebuild edge lists from exported coefficient and precision paths."""
    params = {"subcommand": "networks", "input": input_dir,
              "profiles": profiles, "out": out}
    arts = None

    def action():
        nonlocal arts
        cfg = _merged_config(ctx, config_file, params)
        arts = _Artifacts(cfg["out"])
        coef_dir = os.path.join(cfg["input"], "coefficients")
        if not os.path.isdir(coef_dir):
            raise ValidationError(f"no coefficients directory under {cfg['input']}")
        paths = [serialize.load_coefficient_path(os.path.join(coef_dir, f))
                 for f in sorted(os.listdir(coef_dir)) if f.endswith(".bin")]
        if not paths:
            raise ValidationError(f"no coefficient containers in {coef_dir}")
        d = len(paths)
        prec_file = os.path.join(cfg["input"], "precision.bin")
        prec = serialize.load_precision_path(prec_file) if os.path.isfile(prec_file) else None
        est = NetworkEstimate(
            granger=granger_edges(paths, d),
            partial=partial_corr_edges(prec) if prec is not None else frozenset(),
            d=d,
        )
        write_edge_csv(est, arts.path("edges.csv"),
                       granger_evidence=granger_evidence(paths, d),
                       partial_evidence=(partial_evidence(prec) if prec is not None else None))
        if cfg["profiles"]:
            _write_profiles(arts, paths, prec, est, d)
        serialize.write_manifest(arts.path("manifest.json"), cfg,
                                 artifacts=arts.relative())
        _log(f"{len(est.granger)} directed, {len(est.partial)} undirected edges "
             f"-> {arts.root}")

    _execute(action, lambda: arts)


def _write_profiles(arts: _Artifacts, paths, prec, est: NetworkEstimate, d: int) -> None:
    n = paths[0].estimates.shape[0]
    grid = np.arange(1, n + 1, dtype=float) / n
    by_resp = {path.response_index: path for path in paths}
    g_edges = sorted(est.granger)
    if g_edges:
        cols = np.column_stack([by_resp[i].estimates[:, j] for i, j in g_edges])
        write_profile_csv(arts.path("granger_profiles.csv"), grid, cols,
                          [f"a_{i + 1}_{j + 1}" for i, j in g_edges])
    p_edges = sorted(est.partial)
    if prec is not None and p_edges:
        cols = np.column_stack([prec.matrices[:, i, j] for i, j in p_edges])
        write_profile_csv(arts.path("partial_profiles.csv"), prec.eval_grid, cols,
                          [f"w_{i + 1}_{j + 1}" for i, j in p_edges])


# -- benchmark -----------------------------------------------------------------

@main.command(name="benchmark")
@click.option("--example", type=int, default=1, show_default=True)
@click.option("--d", type=int, default=10, show_default=True)
@click.option("--n", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--reps", type=int, default=1, show_default=True)
@click.option("--methods", type=str, default=",".join(BENCHMARK_METHODS),
              show_default=True, help="Comma-separated method subset.")
@click.option("--p", type=int, default=1, show_default=True)
@click.option("--h", type=float, default=None)
@click.option("--b", type=float, default=None)
@click.option("--h-star", type=float, default=None)
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--factor-mode", type=click.Choice(["none", "constant", "time-varying"]),
              default="none", show_default=True)
@click.option("--k", type=int, default=None)
@click.option("--auto-k", is_flag=True, default=False)
@click.option("--lambda3", type=float, default=None)
@click.option("--threads", type=int, default=None,
              help="Worker threads (default: available parallelism).")
@_common_out
@click.pass_context
def cmd_benchmark(ctx, example, d, n, seed, reps, methods, p, h, b, h_star,
                  gamma, factor_mode, k, auto_k, lambda3, threads, out, config_file):
    """Seeded Monte-Carlo study emitting mean-per-cell metric tables."""
    params = {"subcommand": "benchmark", "example": example, "d": d, "n": n,
              "seed": seed, "reps": reps, "methods": methods, "p": p, "h": h,
              "b": b, "h_star": h_star, "gamma": gamma,
              "factor_mode": factor_mode, "k": k, "auto_k": auto_k,
              "lambda3": lambda3, "threads": threads, "out": out}
    arts = None

    def action():
        nonlocal arts
        cfg = _merged_config(ctx, config_file, params)
        arts = _Artifacts(cfg["out"])
        method_list = [m.strip() for m in str(cfg["methods"]).split(",") if m.strip()]
        threads_use = cfg["threads"] if cfg["threads"] else (os.cpu_count() or 1)
        factor_k = _resolve_factor_k(cfg["k"], cfg["auto_k"])
        rows, detail = run_benchmark(
            cfg["example"], cfg["d"], cfg["n"], cfg["seed"], cfg["reps"],
            methods=method_list, threads=threads_use, log=_log, p=cfg["p"],
            h=cfg["h"], b=cfg["b"], gamma=cfg["gamma"],
            factor_mode=cfg["factor_mode"], factor_k=factor_k,
            h_star=cfg["h_star"], lambda3=cfg["lambda3"],
        )
        serialize.write_metric_csv(rows, arts.path("benchmark.csv"))
        serialize.write_metric_json(rows, arts.path("benchmark.json"),
                                    extra={"detail": detail})
        serialize.write_manifest(arts.path("manifest.json"), cfg,
                                 seed=cfg["seed"], artifacts=arts.relative())
        _log(f"benchmark done ({cfg['reps']} reps) -> {arts.root}")

    _execute(action, lambda: arts)


# -- metrics -------------------------------------------------------------------

@main.command(name="metrics")
@click.option("--truth", "truth_dir", required=True, type=click.Path(exists=True),
              help="Artifact directory from the simulate subcommand.")
@click.option("--est", "est_dir", required=True, type=click.Path(exists=True),
              help="Artifact directory from the estimate subcommand.")
@click.option("--method", type=str, default="wglasso", show_default=True,
              help="Method label for the report rows.")
@_common_out
@click.pass_context
def cmd_metrics(ctx, truth_dir, est_dir, method, out, config_file):
    """Score exported estimates against a simulation truth container."""
    params = {"subcommand": "metrics", "truth": truth_dir, "est": est_dir,
              "method": method, "out": out}
    arts = None

    def action():
        nonlocal arts
        cfg = _merged_config(ctx, config_file, params)
        arts = _Artifacts(cfg["out"])
        meta, arrays = _read_truth(cfg["truth"])
        d = int(meta["d"])
        truth_granger = frozenset((int(i), int(j)) for i, j in meta["granger_edges"])
        truth_partial = frozenset((int(i), int(j)) for i, j in meta["partial_edges"])
        coef_dir = os.path.join(cfg["est"], "coefficients")
        rows = []
        key = {"example": meta["example"], "d": d, "n": meta["n"]}
        if os.path.isdir(coef_dir):
            paths = [serialize.load_coefficient_path(os.path.join(coef_dir, f))
                     for f in sorted(os.listdir(coef_dir)) if f.endswith(".bin")]
            cls = classification_metrics(granger_edges(paths, d), truth_granger,
                                         granger_universe(d))
            row = {**key, "method": cfg["method"], "graph": "granger",
                   "TP": cls.counts.TP, "FP": cls.counts.FP, "FN": cls.counts.FN,
                   "TN": cls.counts.TN, "TPR": cls.TPR, "TNR": cls.TNR,
                   "PPV": cls.PPV, "NPV": cls.NPV, "F1": cls.F1, "MCC": cls.MCC}
            if arrays["A1"] is not None:
                row["EE_A"] = estimation_error_A(paths, arrays["A1"])
            rows.append(row)
        prec_file = os.path.join(cfg["est"], "precision.bin")
        if os.path.isfile(prec_file):
            prec = serialize.load_precision_path(prec_file)
            cls = classification_metrics(partial_corr_edges(prec), truth_partial,
                                         partial_universe(d))
            row = {**key, "method": cfg["method"], "graph": "partial",
                   "TP": cls.counts.TP, "FP": cls.counts.FP, "FN": cls.counts.FN,
                   "TN": cls.counts.TN, "TPR": cls.TPR, "TNR": cls.TNR,
                   "PPV": cls.PPV, "NPV": cls.NPV, "F1": cls.F1, "MCC": cls.MCC}
            if arrays["Omega"] is not None:
                p_lag = int(meta["n"]) - prec.matrices.shape[0]
                row["EE_Omega"] = estimation_error_Omega(prec.matrices,
                                                         arrays["Omega"][p_lag:])
            rows.append(row)
        if not rows:
            raise ValidationError(f"no scorable artifacts under {cfg['est']}")
        serialize.write_metric_csv(rows, arts.path("report.csv"))
        serialize.write_metric_json(rows, arts.path("report.json"))
        serialize.write_manifest(arts.path("manifest.json"), cfg,
                                 artifacts=arts.relative())
        _log(f"metric report -> {arts.root}")

    _execute(action, lambda: arts)


if __name__ == "__main__":
    main()
