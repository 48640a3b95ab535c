"""Stage 2: SCAD weights, weighted group LASSO, GIC tuning, comparators."""

import numpy as np
import pytest

from tvnets import (
    ValidationError,
    build_lagged_design,
    build_weights,
    deviation_stat,
    fit_weighted_group_lasso,
    preliminary_path,
    scad_derivative,
)
from tvnets.wglasso import (
    GroupWeights,
    default_lambda2_grid,
    fit_full,
    fit_oracle,
    gic_select_lambda2,
    group_kkt_residuals,
)

from conftest import make_var1_panel
from properties import _group_kkt_gap, prop_scad_derivative

SCAD_A0 = 3.7


def test_scad_derivative_piecewise():
    prop_scad_derivative()


def test_scad_derivative_spot_values():
    lam = 1.0
    assert scad_derivative(0.0, lam) == lam
    assert scad_derivative(lam, lam) == lam
    # midpoint of the decay segment: (a0*lam - z)/(a0 - 1)
    z = (1.0 + SCAD_A0) / 2.0
    assert scad_derivative(z, lam) == pytest.approx((SCAD_A0 - z) / (SCAD_A0 - 1.0))
    assert scad_derivative(10.0, lam) == 0.0
    with pytest.raises(ValidationError):
        scad_derivative(-0.5, lam)


def test_deviation_stat():
    col = np.array([1.0, 2.0, 3.0])
    assert deviation_stat(col) == pytest.approx(np.sqrt(2.0))
    assert deviation_stat(np.full(5, 3.3)) == 0.0


def test_build_weights_matches_manual(rng):
    panel = make_var1_panel(rng, n=60, d=3)
    design = build_lagged_design(panel, 0, 1)
    prelim = preliminary_path(design, 0.35, lam1=0.02)
    lam2 = 0.15
    w = build_weights(prelim, lam2)
    norms = np.linalg.norm(prelim.estimates, axis=0)
    devs = np.array([deviation_stat(prelim.estimates[:, j]) for j in range(3)])
    assert np.array_equal(w.w_alpha, scad_derivative(norms, lam2))
    assert np.allclose(w.w_beta, scad_derivative(devs, lam2), rtol=1e-12, atol=0.0)
    assert w.lambda2 == lam2


def test_build_weights_requires_preliminary_stage(rng):
    panel = make_var1_panel(rng, n=60, d=3)
    design = build_lagged_design(panel, 0, 1)
    prelim = preliminary_path(design, 0.35, lam1=0.02)
    path = fit_full(design, 0.35)
    with pytest.raises(ValidationError):
        build_weights(path, 0.1)
    build_weights(prelim, 0.1)


def test_group_solution_satisfies_kkt(rng):
    panel = make_var1_panel(rng, n=80, d=4)
    design = build_lagged_design(panel, 1, 1)
    h = 0.32
    prelim = preliminary_path(design, h, lam1=0.03)
    for lam2 in (0.02, 0.1, 0.4):
        w = build_weights(prelim, lam2)
        path = fit_weighted_group_lasso(design, h, w)
        assert path.stage == "weighted-group"
        assert _group_kkt_gap(design, h, w, path) <= 1e-5


def test_internal_kkt_diagnostic_agrees(rng):
    panel = make_var1_panel(rng, n=70, d=3)
    design = build_lagged_design(panel, 0, 1)
    h = 0.35
    prelim = preliminary_path(design, h, lam1=0.03)
    w = build_weights(prelim, 0.1)
    path = fit_weighted_group_lasso(design, h, w)
    res_a, res_b = group_kkt_residuals(design, h, w, path)
    assert max(res_a.max(), res_b.max()) <= 1e-5


def test_proximal_gradient_oracle_objective(rng):
    """Independent ISTA solver reaches the same objective value."""
    panel = make_var1_panel(rng, n=50, d=3)
    design = build_lagged_design(panel, 0, 1)
    h, lam2 = 0.4, 0.08
    prelim = preliminary_path(design, h, lam1=0.05)
    w = build_weights(prelim, lam2)
    path = fit_weighted_group_lasso(design, h, w)

    from tvnets import kernel_eval

    n = design.n
    eval_grid = np.arange(1, n + 1) / n
    m = design.regressors.shape[1]
    Zs, ys, ks = [], design.response, []
    for tau in eval_grid:
        u = (design.grid - tau) / h
        k = kernel_eval(u) / h
        Zs.append(np.hstack([design.regressors, design.regressors * u[:, None]]))
        ks.append(k)

    def loss_grad(A, B):
        loss = 0.0
        GA = np.zeros_like(A)
        GB = np.zeros_like(B)
        for s in range(n):
            theta = np.concatenate([A[s], B[s]])
            r = Zs[s] @ theta - ys
            loss += float(ks[s] @ (r * r)) / n
            g = 2.0 * Zs[s].T @ (ks[s] * r) / n
            GA[s], GB[s] = g[:m], g[m:]
        return loss, GA, GB

    def objective(A, B):
        loss, _, _ = loss_grad(A, B)
        return loss + float(w.w_alpha @ np.linalg.norm(A, axis=0)
                            + w.w_beta @ np.linalg.norm(B, axis=0))

    L = 0.0
    for s in range(n):
        H = 2.0 * Zs[s].T @ (Zs[s] * ks[s][:, None]) / n
        L = max(L, np.linalg.eigvalsh(H).max())
    A = np.zeros((n, m))
    B = np.zeros((n, m))
    step = 1.0 / L
    prev = np.inf
    for it in range(20000):
        _, GA, GB = loss_grad(A, B)
        A = A - step * GA
        B = B - step * GB
        for Z, wt in ((A, w.w_alpha), (B, w.w_beta)):
            for j in range(m):
                nz = np.linalg.norm(Z[:, j])
                t = step * wt[j]
                Z[:, j] = 0.0 if nz <= t else Z[:, j] * (1.0 - t / nz)
        if it % 200 == 0:
            cur = objective(A, B)
            if prev - cur < 1e-12:
                break
            prev = cur
    impl_obj = objective(path.estimates, path.derivatives * h)
    ista_obj = objective(A, B)
    assert impl_obj <= ista_obj + 1e-7


def test_oracle_full_support_equals_full_fit(rng):
    panel = make_var1_panel(rng, n=60, d=3)
    design = build_lagged_design(panel, 2, 1)
    h = 0.35
    every = range(3)
    a = fit_oracle(design, h, every, every)
    b = fit_full(design, h)
    assert np.array_equal(a.estimates, b.estimates)
    assert np.array_equal(a.derivatives, b.derivatives)
    assert a.stage == "oracle" and b.stage == "full"


def test_full_fit_matches_direct_weighted_least_squares(rng):
    from tvnets import kernel_eval

    panel = make_var1_panel(rng, n=60, d=3)
    design = build_lagged_design(panel, 0, 1)
    h = 0.4
    path = fit_full(design, h)
    n, m = 60, 3
    for s in (0, 29, 59):
        tau = (s + 1) / n
        u = (design.grid - tau) / h
        k = kernel_eval(u) / h
        Z = np.hstack([design.regressors, design.regressors * u[:, None]])
        theta = np.linalg.solve(Z.T @ (Z * k[:, None]), Z.T @ (k * design.response))
        assert np.allclose(path.estimates[s], theta[:m], atol=1e-8)
        assert np.allclose(path.derivatives[s], theta[m:] / h, atol=1e-8)


def test_oracle_zeroes_excluded_columns(rng):
    panel = make_var1_panel(rng, n=60, d=4)
    design = build_lagged_design(panel, 0, 1)
    path = fit_oracle(design, 0.35, [0, 2], [0])
    assert np.all(path.estimates[:, [1, 3]] == 0.0)
    assert np.all(path.derivatives[:, [1, 2, 3]] == 0.0)
    assert np.any(path.estimates[:, 0] != 0.0)


def test_default_lambda2_grid_zeroes_everything(rng):
    panel = make_var1_panel(rng, n=60, d=3)
    design = build_lagged_design(panel, 0, 1)
    h = 0.35
    grid = default_lambda2_grid(design, h)
    assert grid.size == 30
    w = GroupWeights(w_alpha=np.full(3, grid[0]), w_beta=np.full(3, grid[0]),
                     lambda2=float(grid[0]))
    path = fit_weighted_group_lasso(design, h, w)
    assert np.all(path.estimates == 0.0)
    assert np.all(path.derivatives == 0.0)


def test_gic_recovers_sparse_support(rng):
    # x0 depends on x0 and x1 lags; x2, x3 are noise regressors
    n = 200
    X = np.zeros((n + 40, 4))
    for t in range(1, n + 40):
        X[t, 0] = 0.5 * X[t - 1, 0] + 0.45 * X[t - 1, 1] + 0.4 * rng.standard_normal()
        X[t, 1:] = 0.3 * X[t - 1, 1:] + rng.standard_normal(3)
    from tvnets import TimeSeriesPanel

    panel = TimeSeriesPanel(X[40:])
    design = build_lagged_design(panel, 0, 1)
    h = 0.3
    prelim = preliminary_path(design, h)
    lam2, path, gic = gic_select_lambda2(design, prelim, h)
    assert lam2 > 0.0
    active = np.flatnonzero(np.any(path.estimates != 0.0, axis=0))
    assert 0 in active and 1 in active
    assert 2 not in active and 3 not in active
