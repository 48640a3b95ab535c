"""Stage 1: penalised local-linear fits and BIC tuning."""

import numpy as np
import pytest

from tvnets import (
    ValidationError,
    bic_select_lambda1,
    build_lagged_design,
    kernel_eval,
    local_lasso,
    preliminary_path,
)
from tvnets.tvlasso import default_lambda1_grid, path_from_cache, _cache_for

from conftest import make_var1_panel
from properties import _lasso_kkt_gap


def _wls_oracle(design, tau, h):
    """Weighted least squares on the augmented design, solved directly."""
    u = (design.grid - tau) / h
    k = kernel_eval(u) / h
    Z = np.hstack([design.regressors, design.regressors * u[:, None]])
    G = Z.T @ (Z * k[:, None])
    c = Z.T @ (k * design.response)
    return np.linalg.solve(G, c)


def test_zero_penalty_matches_weighted_least_squares(rng):
    panel = make_var1_panel(rng, n=80, d=3)
    design = build_lagged_design(panel, 0, 1)
    h = 0.35
    for tau in (0.2, 0.5, 0.83):
        fit = local_lasso(design, tau, h, 0.0)
        theta = _wls_oracle(design, tau, h)
        m = design.regressors.shape[1]
        assert np.allclose(fit.alpha, theta[:m], atol=1e-6)
        assert np.allclose(fit.beta, theta[m:] / h, atol=1e-6)


def test_kkt_conditions_hold(rng):
    panel = make_var1_panel(rng, n=70, d=4)
    design = build_lagged_design(panel, 2, 1)
    for lam1 in (0.01, 0.05, 0.3):
        fit = local_lasso(design, 0.4, 0.3, lam1)
        assert _lasso_kkt_gap(design, 0.4, 0.3, lam1, fit) <= 1e-5


def test_large_penalty_gives_zero_solution(rng):
    panel = make_var1_panel(rng, n=60, d=3)
    design = build_lagged_design(panel, 0, 1)
    tau, h = 0.5, 0.3
    u = (design.grid - tau) / h
    k = kernel_eval(u) / h
    Z = np.hstack([design.regressors, design.regressors * u[:, None]])
    lam_max = 2.0 * np.abs(Z.T @ (k * design.response)).max() / design.n
    fit = local_lasso(design, tau, h, lam_max * 1.0001)
    assert np.all(fit.alpha == 0.0)
    assert np.all(fit.beta == 0.0)


def test_negative_penalty_rejected(rng):
    panel = make_var1_panel(rng, n=60, d=3)
    design = build_lagged_design(panel, 0, 1)
    with pytest.raises(ValidationError):
        local_lasso(design, 0.5, 0.3, -0.1)


def test_default_grid_shape():
    grid = default_lambda1_grid(2.0)
    assert grid[0] == 2.0
    assert grid.size == 50
    assert np.all(np.diff(grid) < 0)
    assert np.array_equal(default_lambda1_grid(0.0), np.zeros(1))


def test_bic_selects_from_grid(rng):
    panel = make_var1_panel(rng, n=80, d=3)
    design = build_lagged_design(panel, 1, 1)
    grid = np.array([0.001, 0.01, 0.1, 1.0])
    lam, fit = bic_select_lambda1(design, 0.5, 0.3, grid=grid)
    assert lam in grid
    assert fit.lambda1 == lam
    assert fit.tau == 0.5


def test_bic_objective_is_reproducible(rng):
    panel = make_var1_panel(rng, n=80, d=3)
    design = build_lagged_design(panel, 1, 1)
    lam_a, fit_a = bic_select_lambda1(design, 0.4, 0.3)
    lam_b, fit_b = bic_select_lambda1(design, 0.4, 0.3)
    assert lam_a == lam_b
    assert np.array_equal(fit_a.alpha, fit_b.alpha)


def test_preliminary_path_shapes_and_stage(rng):
    panel = make_var1_panel(rng, n=60, d=3)
    design = build_lagged_design(panel, 0, 1)
    path = preliminary_path(design, 0.35, lam1=0.05)
    assert path.stage == "preliminary"
    assert path.estimates.shape == (60, 3)
    assert path.derivatives.shape == (60, 3)
    assert path.response_index == 0
    assert path.lag_order == 1


def test_path_from_cache_matches_per_response_api(rng):
    panel = make_var1_panel(rng, n=60, d=3)
    design = build_lagged_design(panel, 1, 1)
    cache = _cache_for(design, 0.35, __import__("tvnets").EPANECHNIKOV)
    a = preliminary_path(design, 0.35, lam1=0.05)
    b = path_from_cache(cache, 0 if cache.n_resp == 1 else 1, 1, lam1=0.05)
    assert np.array_equal(a.estimates, b.estimates)
    assert np.array_equal(a.derivatives, b.derivatives)


def test_path_recovers_sparse_truth(rng):
    # series 0 depends only on its own lag; stage 1 should keep column 0 big
    n = 150
    X = np.zeros((n + 30, 4))
    for t in range(1, n + 30):
        X[t] = 0.0
        X[t, 0] = 0.7 * X[t - 1, 0] + 0.3 * rng.standard_normal()
        X[t, 1:] = 0.2 * X[t - 1, 1:] + rng.standard_normal(3)
    from tvnets import TimeSeriesPanel

    panel = TimeSeriesPanel(X[30:])
    design = build_lagged_design(panel, 0, 1)
    path = preliminary_path(design, 0.35)
    norms = np.linalg.norm(path.estimates, axis=0)
    assert norms[0] > 2.0 * norms[1:].max()
