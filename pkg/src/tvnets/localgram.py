"""Shared kernel-weighted Gram machinery for the local-linear stages.

Every per-tau estimation problem in the coefficient stages reduces to the
quadratic form

    loss_i(theta | tau) = (1/n) * (ysq - 2 c' theta + theta' G theta),

where theta = (alpha, h*beta) stacks levels and scaled derivatives, G is the
kernel-weighted Gram of the lagged design augmented with u = (tau_t - tau)/h
interaction columns, and c is the matching score vector.  The Gram blocks are
identical across response indices, so they are computed once per evaluation
point and shared by stage 1, stage 2 and the unpenalised comparators.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateWindowError, SingularDesignError
from .kernels import EPANECHNIKOV, KernelSpec, kernel_eval

__all__ = ["LocalGramCache"]


class LocalGramCache:
    """Per-evaluation-point Gram blocks for a shared lagged design.

    Parameters
    ----------
    X_lag : (n_rows, m) lagged regressor matrix (rows t = p+1..n).
    Y : (n_rows, n_resp) response columns aligned with the regressor rows.
    row_grid : scaled times of the regressor rows.
    eval_grid : scaled times at which local fits are evaluated.
    h : bandwidth.
    """

    def __init__(self, X_lag, Y, row_grid, eval_grid, h, spec: KernelSpec = EPANECHNIKOV,
                 n_norm: int = None):
        X_lag = np.ascontiguousarray(X_lag, dtype=float)
        Y = np.ascontiguousarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        self.X_lag = X_lag
        self.Y = Y
        self.row_grid = np.asarray(row_grid, dtype=float)
        self.eval_grid = np.asarray(eval_grid, dtype=float)
        self.h = float(h)
        self.spec = spec
        self.n_rows, self.m = X_lag.shape
        self.n_resp = Y.shape[1]
        self.n_eval = self.eval_grid.shape[0]
        # loss normalization: transcribes the (1/n) in the local objective,
        # with n the panel length
        self.n_norm = int(n_norm) if n_norm is not None else self.n_eval
        self._build()

    def _build(self):
        ne, m, nr = self.n_eval, self.m, self.n_resp
        self.G00 = np.empty((ne, m, m))
        self.G01 = np.empty((ne, m, m))
        self.G11 = np.empty((ne, m, m))
        self.C0 = np.empty((ne, m, nr))
        self.C1 = np.empty((ne, m, nr))
        self.ysq = np.empty((ne, nr))
        self.kernel_mass = np.empty(ne)     # sum_t K_h(tau_t - tau)
        self.kernel_max = np.empty(ne)      # max_t K_h(tau_t - tau)
        self.support_count = np.zeros(ne, dtype=np.int64)
        h = self.h
        for s, tau in enumerate(self.eval_grid):
            u = (self.row_grid - tau) / h
            k = kernel_eval(u, self.spec) / h
            sup = np.flatnonzero(k > 0.0)
            self.support_count[s] = sup.size
            if sup.size < 2:
                raise DegenerateWindowError(
                    f"fewer than 2 observations in the window at tau={tau:.4f}, h={h}"
                )
            Xs = self.X_lag[sup]
            Ys = self.Y[sup]
            w = k[sup]
            us = u[sup]
            Xw = Xs * w[:, None]
            Xwu = Xs * (w * us)[:, None]
            Xwuu = Xs * (w * us * us)[:, None]
            self.G00[s] = Xw.T @ Xs
            self.G01[s] = Xwu.T @ Xs
            self.G11[s] = Xwuu.T @ Xs
            self.C0[s] = Xw.T @ Ys
            self.C1[s] = Xwu.T @ Ys
            self.ysq[s] = w @ (Ys * Ys)
            self.kernel_mass[s] = w.sum()
            self.kernel_max[s] = w.max()

    # -- assembled views -------------------------------------------------

    def gram_full(self, s: int) -> np.ndarray:
        """The (2m, 2m) Gram at evaluation point index ``s``."""
        m = self.m
        G = np.empty((2 * m, 2 * m))
        G[:m, :m] = self.G00[s]
        G[:m, m:] = self.G01[s]
        G[m:, :m] = self.G01[s].T
        G[m:, m:] = self.G11[s]
        return G

    def score(self, s: int, i: int) -> np.ndarray:
        """The (2m,) score vector c for response ``i`` at point index ``s``."""
        return np.concatenate([self.C0[s, :, i], self.C1[s, :, i]])

    def effective_sample_size(self, s: int) -> float:
        return float(self.kernel_mass[s] / self.kernel_max[s])

    def loss(self, s: int, i: int, theta: np.ndarray) -> float:
        """Local loss value at point index ``s`` for response ``i``."""
        G = self.gram_full(s)
        c = self.score(s, i)
        return float((self.ysq[s, i] - 2.0 * c @ theta + theta @ G @ theta) / self.n_norm)

    # -- unpenalised restricted solves -----------------------------------

    def solve_restricted(self, s: int, i: int, level_idx, deriv_idx):
        """Weighted least squares on a column subset at point index ``s``.

        Returns (alpha_sub, scaled_beta_sub) for the requested level and
        derivative columns.  Raises SingularDesignError when the restricted
        normal equations are numerically rank deficient.
        """
        level_idx = np.asarray(level_idx, dtype=np.intp)
        deriv_idx = np.asarray(deriv_idx, dtype=np.intp)
        na, nb = level_idx.size, deriv_idx.size
        if na + nb == 0:
            return np.zeros(0), np.zeros(0)
        G = np.empty((na + nb, na + nb))
        G[:na, :na] = self.G00[s][np.ix_(level_idx, level_idx)]
        G[:na, na:] = self.G01[s][np.ix_(level_idx, deriv_idx)]
        G[na:, :na] = self.G01[s].T[np.ix_(deriv_idx, level_idx)]
        G[na:, na:] = self.G11[s][np.ix_(deriv_idx, deriv_idx)]
        rhs = np.concatenate([self.C0[s, level_idx, i], self.C1[s, deriv_idx, i]])
        theta = _solve_spd(G, rhs, s)
        return theta[:na], theta[na:]

    def solve_full_all_responses(self, s: int):
        """Unpenalised fit of all 2m coefficients for every response at once."""
        G = self.gram_full(s)
        rhs = np.vstack([self.C0[s], self.C1[s]])
        return _solve_spd(G, rhs, s)


def _solve_spd(G, rhs, s):
    """Cholesky solve with an explicit rank check.

    The Gram of a local window with fewer effective observations than
    coefficients is singular; that case must surface as an error rather than
    be regularised away.
    """
    scale = np.max(np.abs(np.diag(G)))
    if scale <= 0.0:
        raise SingularDesignError(f"zero Gram at evaluation index {s}")
    try:
        L = np.linalg.cholesky(G + 0.0)
    except np.linalg.LinAlgError:
        raise SingularDesignError(
            f"rank-deficient local design at evaluation index {s}"
        ) from None
    dmin = np.min(np.diag(L))
    if not np.isfinite(dmin) or dmin * dmin <= 1e-11 * scale:
        raise SingularDesignError(f"rank-deficient local design at evaluation index {s}")
    z = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, z)
