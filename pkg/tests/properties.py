"""Property suites shared by the module tests and the acceptance gate.

Each prop_* function raises AssertionError on violation.  Oracles here are
built independently of the package internals: Gram matrices and KKT systems
are reconstructed from first principles, and linear programs are re-solved
with cvxpy.
"""

import numpy as np

from tvnets import (
    EPANECHNIKOV,
    ScenarioSpec,
    TimeSeriesPanel,
    build_lagged_design,
    build_weights,
    clime_column,
    fit_weighted_group_lasso,
    generate,
    kernel_eval,
    local_lasso,
    local_linear_weights,
    pca_factors,
    preliminary_path,
    run_benchmark,
    scad_derivative,
    symmetrize,
)

SCAD_A0 = 3.7


# -- independent reconstructions ------------------------------------------

def _local_design(design, tau, h):
    """Kernel weights and augmented regressors (levels, scaled derivatives)."""
    u = (design.grid - tau) / h
    k = kernel_eval(u) / h
    Xa = design.regressors
    Xb = Xa * u[:, None]
    return k, Xa, Xb


def _lasso_kkt_gap(design, tau, h, lam1, fit):
    """Max KKT violation of a single-point l1 fit, from scratch."""
    k, Xa, Xb = _local_design(design, tau, h)
    Z = np.hstack([Xa, Xb])
    G = Z.T @ (Z * k[:, None])
    c = Z.T @ (k * design.response)
    theta = np.concatenate([fit.alpha, fit.beta * h])
    g = 2.0 * (G @ theta - c) / design.n
    gap = 0.0
    for j in range(theta.size):
        if theta[j] != 0.0:
            gap = max(gap, abs(g[j] + lam1 * np.sign(theta[j])))
        else:
            gap = max(gap, max(0.0, abs(g[j]) - lam1))
    return gap


def _group_kkt_gap(design, h, weights, path):
    """Max group-KKT violation of a whole-path fit, from scratch."""
    n = design.n
    eval_grid = np.arange(1, n + 1) / n
    A = path.estimates
    B = path.derivatives * h
    m = A.shape[1]
    R0 = np.empty_like(A)
    R1 = np.empty_like(B)
    for s, tau in enumerate(eval_grid):
        k, Xa, Xb = _local_design(design, tau, h)
        y = design.response
        fit0 = Xa @ A[s] + Xb @ B[s]
        R0[s] = 2.0 * (Xa.T @ (k * (fit0 - y))) / n
        R1[s] = 2.0 * (Xb.T @ (k * (fit0 - y))) / n
    gap = 0.0
    for R, Z, w in ((R0, A, weights.w_alpha), (R1, B, weights.w_beta)):
        for j in range(m):
            nz = np.linalg.norm(Z[:, j])
            if nz > 0.0:
                gap = max(gap, np.linalg.norm(R[:, j] + w[j] * Z[:, j] / nz))
            else:
                gap = max(gap, max(0.0, np.linalg.norm(R[:, j]) - w[j]))
    return gap


def _random_design(rng, n, d):
    X = rng.standard_normal((n + 20, d))
    for t in range(1, n + 20):
        X[t] += 0.3 * X[t - 1]
    panel = TimeSeriesPanel(X[20:])
    return build_lagged_design(panel, int(rng.integers(d)), 1)


# -- the eight suites -------------------------------------------------------

def prop_lasso_group_kkt(seed=20260826, n_instances=50, tol=1e-5):
    """(a) KKT conditions on random small l1 and group-l1 instances."""
    rng = np.random.default_rng(seed)
    for trial in range(n_instances // 2):
        n, d = int(rng.integers(40, 70)), int(rng.integers(2, 5))
        design = _random_design(rng, n, d)
        h = float(rng.uniform(0.25, 0.5))
        tau = float(rng.uniform(0.2, 0.8))
        lam1 = float(rng.uniform(0.005, 0.2))
        fit = local_lasso(design, tau, h, lam1)
        gap = _lasso_kkt_gap(design, tau, h, lam1, fit)
        assert gap <= tol, f"lasso KKT gap {gap:.2e} > {tol} on trial {trial}"
    for trial in range(n_instances - n_instances // 2):
        n, d = int(rng.integers(40, 60)), int(rng.integers(2, 4))
        design = _random_design(rng, n, d)
        h = float(rng.uniform(0.25, 0.5))
        prelim = preliminary_path(design, h, lam1=float(rng.uniform(0.01, 0.1)))
        lam2 = float(rng.uniform(0.005, 0.3))
        weights = build_weights(prelim, lam2)
        path = fit_weighted_group_lasso(design, h, weights)
        gap = _group_kkt_gap(design, h, weights, path)
        assert gap <= tol, f"group KKT gap {gap:.2e} > {tol} on trial {trial}"


def prop_clime_lp_oracle(seed=20260826, n_instances=25, gap_tol=1e-6):
    """(b) feasibility plus objective gap against a cvxpy LP oracle."""
    import cvxpy as cp

    rng = np.random.default_rng(seed)
    for trial in range(n_instances):
        d = int(rng.integers(2, 7))
        Q = rng.standard_normal((d, d))
        Sigma = Q @ Q.T / d + 0.3 * np.eye(d)
        lam3 = float(rng.uniform(0.05, 0.4))
        j = int(rng.integers(d))
        om = clime_column(Sigma, j, lam3)
        e = np.zeros(d)
        e[j] = 1.0
        infeas = np.abs(Sigma @ om - e).max() - lam3
        assert infeas <= 1e-9, f"feasibility violated by {infeas:.2e} on trial {trial}"
        x = cp.Variable(d)
        prob = cp.Problem(cp.Minimize(cp.norm1(x)),
                          [cp.norm_inf(Sigma @ x - e) <= lam3])
        prob.solve()
        assert prob.status == "optimal"
        gap = np.abs(om).sum() - prob.value
        assert gap <= gap_tol, f"objective gap {gap:.2e} > {gap_tol} on trial {trial}"


def prop_weight_annihilation(seed=20260826, n_combos=100):
    """(c) local-linear weights kill the first moment at every (tau, b)."""
    rng = np.random.default_rng(seed)
    n = 150
    grid = np.arange(1, n + 1) / n
    for _ in range(n_combos):
        tau = float(rng.uniform(0.0, 1.0))
        b = float(rng.uniform(0.05, 0.6))
        w = local_linear_weights(grid, tau, b)
        moment = float(np.sum(w * (grid - tau)))
        scale = max(float(np.abs(w).sum()), 1e-300)
        assert abs(moment) <= 1e-12 * scale, f"first moment {moment:.2e} at tau={tau}, b={b}"


def prop_scad_derivative():
    """(d) piecewise values and continuity of the SCAD derivative."""
    a0 = SCAD_A0
    for lam in (0.1, 0.5, 1.0, 2.5):
        z = np.linspace(0.0, 1.5 * a0 * lam, 2001)
        got = scad_derivative(z, lam)
        expected = np.where(z <= lam, lam, np.maximum(a0 * lam - z, 0.0) / (a0 - 1.0))
        assert np.allclose(got, expected, atol=0.0), f"SCAD values wrong at lam={lam}"
        dz = z[1] - z[0]
        jumps = np.abs(np.diff(got))
        assert jumps.max() <= dz / (a0 - 1.0) + 1e-12 * lam, (
            f"SCAD derivative discontinuous at lam={lam}"
        )
    assert scad_derivative(np.array([0.0, 1.0, 5.0]), 0.0).max() == 0.0


def prop_symmetrize(seed=20260826, n_matrices=100):
    """(e) idempotence, symmetry, and entrywise l1 non-expansion."""
    rng = np.random.default_rng(seed)
    for _ in range(n_matrices):
        d = int(rng.integers(2, 12))
        M = rng.standard_normal((d, d)) * rng.exponential(1.0)
        S = symmetrize(M)
        assert np.array_equal(S, S.T), "symmetrize output not symmetric"
        assert np.array_equal(symmetrize(S), S), "symmetrize not idempotent"
        assert np.abs(S).sum() <= np.abs(M).sum() + 1e-15, "l1 norm expanded"
        assert np.all(np.abs(S) <= np.minimum(np.abs(M), np.abs(M.T)) + 1e-15)


def prop_pca_factors(seed=20260826, n_panels=20):
    """(f) orthonormal factors, orthogonal residuals, rotation invariance."""
    rng = np.random.default_rng(seed)
    for _ in range(n_panels):
        n, d, k = 120, int(rng.integers(8, 20)), 2
        F = rng.standard_normal((n, k)) * np.array([3.0, 2.0])
        L = rng.standard_normal((d, k))
        Z = F @ L.T + 0.1 * rng.standard_normal((n, d))
        fit = pca_factors(TimeSeriesPanel(Z), k)
        gram = fit.factors.T @ fit.factors / n
        assert np.allclose(gram, np.eye(k), atol=1e-10), "factors not orthonormal"
        resid = Z - fit.factors @ fit.loadings.T
        cross = resid.T @ fit.factors / n
        assert np.abs(cross).max() <= 1e-10, "residuals correlate with factors"
        theta = rng.uniform(0.0, 2 * np.pi)
        Q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        Z2 = (F @ Q) @ (L @ Q).T + (Z - F @ L.T)
        fit2 = pca_factors(TimeSeriesPanel(Z2), k)
        common1 = fit.factors @ fit.loadings.T
        common2 = fit2.factors @ fit2.loadings.T
        assert np.allclose(common1, common2, atol=1e-8), "common part not rotation invariant"


def prop_truth_invariants():
    """(g) PD precisions, stable transitions, consistent inverses, d up to 50."""
    n = 100
    for example in (1, 2, 3, 4):
        for d in (4, 10, 50):
            spec = ScenarioSpec(example=example, d=d, n=n, seed=7)
            panel, truth = generate(spec)
            assert panel.values.shape == (n, d)
            assert truth.A1.shape == (n, d, d)
            assert truth.Omega.shape == (n, d, d)
            for t in range(0, n, 7):
                Om = truth.Omega[t]
                assert np.allclose(Om, Om.T), f"Omega not symmetric (ex{example}, d={d})"
                ev = np.linalg.eigvalsh(Om)
                assert ev.min() > 0.0, f"Omega not PD (ex{example}, d={d}, t={t})"
                Sig = np.linalg.inv(Om)
                assert np.allclose(Om @ Sig, np.eye(d), atol=1e-8)
                rho = np.abs(np.linalg.eigvals(truth.A1[t])).max()
                assert rho < 1.0, f"unstable transition (ex{example}, d={d}, t={t})"
            support = np.any(truth.A1 != 0.0, axis=0)
            got = frozenset((int(i), int(j)) for i in range(d) for j in range(d)
                            if support[i, j])
            assert got == truth.granger_edges, f"edge set mismatch (ex{example}, d={d})"
            off = np.any(truth.Omega != 0.0, axis=0)
            partial = frozenset((i, j) for i in range(d) for j in range(i + 1, d)
                                if off[i, j])
            assert partial == truth.partial_edges, f"partial set mismatch (ex{example}, d={d})"


def prop_thread_determinism():
    """(h) identical benchmark artifacts across 1, 4 and 8 worker threads."""
    results = []
    for threads in (1, 4, 8):
        rows, detail = run_benchmark(example=1, d=4, n=80, seed=11, reps=8,
                                     methods=("wglasso", "clime"), threads=threads)
        results.append((rows, detail))
    base_rows, base_detail = results[0]
    for rows, detail in results[1:]:
        assert rows == base_rows, "aggregate rows differ across thread counts"
        assert detail == base_detail, "per-replication records differ across thread counts"
