"""Numba kernels for the l1 coordinate descent used by the preliminary stage.

Everything here works on the Gram parameterization of the local objective:

    f(theta) = (ysq - 2 c'theta + theta' G theta) / n_norm + lam * |theta|_1

with q = G @ theta maintained incrementally.  Coordinate updates produce
exact zeros, which downstream support logic relies on.
"""

import numpy as np
from numba import njit

__all__ = ["cd_solve", "cd_path_bic", "group_bcd"]


@njit(cache=True)
def _soft(x, t):
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@njit(cache=True)
def _sweep(G, c, theta, q, thr, indices):
    """One pass of coordinate updates over ``indices``; returns max |change|."""
    max_delta = 0.0
    for j in indices:
        gjj = G[j, j]
        if gjj <= 0.0:
            continue
        old = theta[j]
        rho = c[j] - q[j] + gjj * old
        new = _soft(rho, thr) / gjj
        if new != old:
            delta = new - old
            theta[j] = new
            q += G[:, j] * delta
            ad = abs(delta)
            if ad > max_delta:
                max_delta = ad
    return max_delta


@njit(cache=True)
def cd_solve(G, c, lam, theta, n_norm, tol, max_sweeps):
    """Cyclic coordinate descent with an active-set strategy.

    ``theta`` is updated in place (warm start); returns (q, sweeps) with
    q = G @ theta recomputed exactly at exit.
    """
    p = theta.shape[0]
    thr = 0.5 * lam * n_norm
    q = G @ theta
    all_idx = np.arange(p)
    sweeps = 0
    while sweeps < max_sweeps:
        # full pass: may activate new coordinates
        delta_full = _sweep(G, c, theta, q, thr, all_idx)
        sweeps += 1
        if delta_full < tol:
            break
        # inner passes restricted to the current active set
        active = np.flatnonzero(theta)
        while sweeps < max_sweeps:
            delta = _sweep(G, c, theta, q, thr, active)
            sweeps += 1
            if delta < tol:
                break
    q = G @ theta
    return q, sweeps


@njit(cache=True)
def cd_path_bic(G, c, ysq, kernel_mass, ne, lam_grid, n_norm, tol, max_sweeps,
                theta_grid, patience):
    """Warm-started descent along a decreasing penalty grid with BIC scoring.

    ``theta_grid`` ((nlam, p), updated in place) carries one solution per
    penalty level and doubles as the warm start for the next evaluation
    point; an all-zero row falls back to the previous level's solution.
    The sweep stops early once ``patience`` consecutive candidates fail to
    improve the criterion (pass nlam to disable); skipped entries keep NaN.
    Returns (best_index, best_theta, bic_values); ties keep the earlier
    (larger) penalty.
    """
    p = G.shape[0]
    nlam = lam_grid.shape[0]
    best_theta = np.zeros(p)
    bics = np.full(nlam, np.nan)
    best = -1
    best_bic = np.inf
    log_ne_over_ne = np.log(ne) / ne
    stale = 0
    for k in range(nlam):
        theta = theta_grid[k]
        if k > 0:
            cold = True
            for jj in range(p):
                if theta[jj] != 0.0:
                    cold = False
                    break
            if cold:
                theta[:] = theta_grid[k - 1]
        q, _ = cd_solve(G, c, lam_grid[k], theta, n_norm, tol, max_sweeps)
        loss = (ysq - 2.0 * (c @ theta) + theta @ q) / n_norm
        if loss < 1e-300:
            loss = 1e-300
        df = np.count_nonzero(theta)
        bic = np.log(loss / kernel_mass) + log_ne_over_ne * df
        bics[k] = bic
        if bic < best_bic - 1e-12:
            best_bic = bic
            best = k
            best_theta[:] = theta
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    return best, best_theta, bics


@njit(cache=True)
def _group_objective(A, B, U0, U1, C0, C1, ysq_total, n_norm, wA, wB):
    ne, m = A.shape
    quad = 0.0
    lin = 0.0
    pen = 0.0
    for j in range(m):
        na = 0.0
        nb = 0.0
        for s in range(ne):
            quad += A[s, j] * U0[s, j] + B[s, j] * U1[s, j]
            lin += A[s, j] * C0[s, j] + B[s, j] * C1[s, j]
            na += A[s, j] * A[s, j]
            nb += B[s, j] * B[s, j]
        pen += wA[j] * np.sqrt(na) + wB[j] * np.sqrt(nb)
    return (ysq_total - 2.0 * lin + quad) / n_norm + pen


@njit(cache=True)
def _group_update(j, G00, G01, G11, C0, C1, A, B, U0, U1, scale, wa, wb, L,
                  inner_tol, max_inner):
    """Proximal-gradient loop on one (level, derivative) column pair.

    The exact per-point 2x2 Hessian gives the Lipschitz constant, so the
    unit step is a guaranteed majorizer and needs no line search.
    """
    ne = A.shape[0]
    m = A.shape[1]
    za = A[:, j].copy()
    zb = B[:, j].copy()
    za0 = za.copy()
    zb0 = zb.copy()
    h00 = np.empty(ne)
    h01 = np.empty(ne)
    h11 = np.empty(ne)
    base_a = np.empty(ne)
    base_b = np.empty(ne)
    for s in range(ne):
        h00[s] = scale * G00[s, j, j]
        h01[s] = scale * G01[s, j, j]
        h11[s] = scale * G11[s, j, j]
        ga = scale * (U0[s, j] - C0[s, j])
        gb = scale * (U1[s, j] - C1[s, j])
        base_a[s] = ga - h00[s] * za[s] - h01[s] * zb[s]
        base_b[s] = gb - h01[s] * za[s] - h11[s] * zb[s]
    step = 1.0 / L
    ta = np.empty(ne)
    tb = np.empty(ne)
    for _ in range(max_inner):
        na = 0.0
        nb = 0.0
        for s in range(ne):
            ga = base_a[s] + h00[s] * za[s] + h01[s] * zb[s]
            gb = base_b[s] + h01[s] * za[s] + h11[s] * zb[s]
            ta[s] = za[s] - step * ga
            tb[s] = zb[s] - step * gb
            na += ta[s] * ta[s]
            nb += tb[s] * tb[s]
        na = np.sqrt(na)
        nb = np.sqrt(nb)
        fa = 0.0 if na <= step * wa or na == 0.0 else 1.0 - step * wa / na
        fb = 0.0 if nb <= step * wb or nb == 0.0 else 1.0 - step * wb / nb
        maxd = 0.0
        maxz = 0.0
        for s in range(ne):
            new_a = fa * ta[s]
            new_b = fb * tb[s]
            da = abs(new_a - za[s])
            db = abs(new_b - zb[s])
            if da > maxd:
                maxd = da
            if db > maxd:
                maxd = db
            za[s] = new_a
            zb[s] = new_b
            aa = abs(new_a)
            ab = abs(new_b)
            if aa > maxz:
                maxz = aa
            if ab > maxz:
                maxz = ab
        if maxd <= inner_tol * (1.0 + maxz):
            break
    changed = False
    for s in range(ne):
        if za[s] != za0[s] or zb[s] != zb0[s]:
            changed = True
            break
    if changed:
        for s in range(ne):
            da = za[s] - za0[s]
            db = zb[s] - zb0[s]
            A[s, j] = za[s]
            B[s, j] = zb[s]
            if da != 0.0 or db != 0.0:
                for l in range(m):
                    U0[s, l] += G00[s, l, j] * da + G01[s, l, j] * db
                    U1[s, l] += G01[s, l, j] * da + G11[s, l, j] * db
    return changed


@njit(cache=True)
def group_bcd(G00, G01, G11, C0, C1, ysq_total, n_norm, wA, wB, A, B, lip,
              outer_tol, max_outer, inner_tol, max_inner, act_eps):
    """Active-set block coordinate descent over (level, derivative) groups.

    A and B are updated in place (warm start allowed).  Returns 1 when the
    relative objective change stabilizes with no screening violations, else 0.
    """
    ne, m = A.shape
    scale = 2.0 / n_norm
    U0 = np.zeros((ne, m))
    U1 = np.zeros((ne, m))
    for j in range(m):
        nz = False
        for s in range(ne):
            if A[s, j] != 0.0 or B[s, j] != 0.0:
                nz = True
                break
        if nz:
            for s in range(ne):
                a = A[s, j]
                b = B[s, j]
                for l in range(m):
                    U0[s, l] += G00[s, l, j] * a + G01[s, l, j] * b
                    U1[s, l] += G01[s, l, j] * a + G11[s, l, j] * b
    active = np.zeros(m, np.bool_)
    for j in range(m):
        if wA[j] <= act_eps or wB[j] <= act_eps:
            active[j] = True
        else:
            for s in range(ne):
                if A[s, j] != 0.0 or B[s, j] != 0.0:
                    active[j] = True
                    break
    prev = _group_objective(A, B, U0, U1, C0, C1, ysq_total, n_norm, wA, wB)
    for _ in range(max_outer):
        for j in range(m):
            if not active[j]:
                ra = 0.0
                rb = 0.0
                for s in range(ne):
                    va = scale * (U0[s, j] - C0[s, j])
                    vb = scale * (U1[s, j] - C1[s, j])
                    ra += va * va
                    rb += vb * vb
                if (np.sqrt(ra) > wA[j] * (1.0 + 1e-9) + act_eps
                        or np.sqrt(rb) > wB[j] * (1.0 + 1e-9) + act_eps):
                    active[j] = True
        for j in range(m):
            if active[j] and lip[j] > 0.0:
                _group_update(j, G00, G01, G11, C0, C1, A, B, U0, U1, scale,
                              wA[j], wB[j], lip[j], inner_tol, max_inner)
        obj = _group_objective(A, B, U0, U1, C0, C1, ysq_total, n_norm, wA, wB)
        bound = outer_tol * (1.0 if abs(prev) < 1.0 else abs(prev))
        if abs(prev - obj) <= bound:
            ok = True
            for j in range(m):
                if not active[j]:
                    ra = 0.0
                    rb = 0.0
                    for s in range(ne):
                        va = scale * (U0[s, j] - C0[s, j])
                        vb = scale * (U1[s, j] - C1[s, j])
                        ra += va * va
                        rb += vb * vb
                    if (np.sqrt(ra) > wA[j] * (1.0 + 1e-9) + act_eps
                            or np.sqrt(rb) > wB[j] * (1.0 + 1e-9) + act_eps):
                        active[j] = True
                        ok = False
            if ok:
                return 1
        prev = obj
    return 0
