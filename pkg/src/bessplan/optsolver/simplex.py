"""Bounded-variable revised simplex.

Rows are turned into equalities with bounded slacks, rows whose starting
slack is out of bounds get an artificial column, and a two-phase method
runs on the result. The basis inverse is kept explicitly, updated by
rank-one pivots and rebuilt from a dense LU inverse every
``REFACTOR_EVERY`` pivots.

Pricing is Dantzig (largest reduced cost, lowest index on ties); after a
run of degenerate pivots it switches to Bland's rule until progress resumes.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import inv
from scipy.linalg.blas import dger

from .lp import LinearProgram, Solution

REFACTOR_EVERY = 50
DEGENERATE_STREAK = 25
PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9
OPT_TOL = 1e-9

_AT_LO, _AT_HI, _FREE, _BASIC = 0, 1, 2, 3


class _Tableau:
    """Internal state of one simplex run on ``min cost @ x, M x = b``."""

    def __init__(self, A, b, lo, hi, art_rows, art_sign):
        m, n = A.shape
        self.m, self.n = m, n
        self.A = A
        self.b = b
        n_art = len(art_rows)
        self.n_tot = n + m + n_art
        self.lo = np.concatenate([lo, np.zeros(n_art)])
        self.hi = np.concatenate([hi, np.full(n_art, np.inf)])
        self.art_rows = np.asarray(art_rows, int)
        self.art_sign = np.asarray(art_sign, float)
        self.x = np.zeros(self.n_tot)
        self.state = np.full(self.n_tot, _AT_LO, dtype=np.int8)
        self.basis = np.empty(m, int)
        self.Binv = np.eye(m, order="F")
        self.pivots_since_refactor = 0
        self.iterations = 0

    def column(self, j):
        if j < self.n:
            return self.A[:, j]
        col = np.zeros(self.m)
        if j < self.n + self.m:
            col[j - self.n] = 1.0
        else:
            k = j - self.n - self.m
            col[self.art_rows[k]] = self.art_sign[k]
        return col

    def basis_matrix(self):
        return np.column_stack([self.column(j) for j in self.basis]) if self.m else np.zeros((0, 0))

    def refactor(self):
        if self.m:
            self.Binv = np.asfortranarray(inv(self.basis_matrix()))
            nb = np.ones(self.n_tot, bool)
            nb[self.basis] = False
            rhs = self.b.copy()
            idx = np.flatnonzero(nb)
            struct = idx[idx < self.n]
            rhs -= self.A[:, struct] @ self.x[struct]
            slack = idx[(idx >= self.n) & (idx < self.n + self.m)]
            rhs[slack - self.n] -= self.x[slack]
            art = idx[idx >= self.n + self.m]
            k = art - self.n - self.m
            np.subtract.at(rhs, self.art_rows[k], self.art_sign[k] * self.x[art])
            self.x[self.basis] = self.Binv @ rhs
        self.pivots_since_refactor = 0

    def reduced_costs(self, cost):
        y = self.Binv.T @ cost[self.basis]
        d = cost.copy()
        d[: self.n] -= self.A.T @ y
        d[self.n: self.n + self.m] -= y
        if len(self.art_rows):
            d[self.n + self.m:] -= self.art_sign * y[self.art_rows]
        return d

    def run(self, cost, max_iter, allow_entry):
        """Iterate to optimality. Returns ``"optimal"``, ``"unbounded"`` or ``"limit"``."""
        bland = False
        streak = 0
        while True:
            if self.iterations >= max_iter:
                return "limit"
            d = self.reduced_costs(cost)
            st = self.state
            movable = allow_entry & (st != _BASIC) & (self.hi > self.lo)
            inc = movable & ((st == _AT_LO) | (st == _FREE)) & (d < -OPT_TOL)
            dec = movable & ((st == _AT_HI) | (st == _FREE)) & (d > OPT_TOL)
            cand = np.flatnonzero(inc | dec)
            if cand.size == 0:
                return "optimal"
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if inc[q] else -1.0
            w = self.Binv @ self.column(q)
            t, r, to_upper = self._ratio_test(w, direction, q, bland)
            if not np.isfinite(t):
                return "unbounded"
            self.iterations += 1
            self.x[q] += direction * t
            if self.m:
                self.x[self.basis] -= direction * t * w
            if r < 0:
                self.state[q] = _AT_HI if direction > 0 else _AT_LO
                self.x[q] = self.hi[q] if direction > 0 else self.lo[q]
            else:
                p = self.basis[r]
                self.x[p] = self.hi[p] if to_upper else self.lo[p]
                self.state[p] = _AT_HI if to_upper else _AT_LO
                if not np.isfinite(self.x[p]):
                    self.x[p] = 0.0
                    self.state[p] = _FREE
                self.basis[r] = q
                self.state[q] = _BASIC
                self._pivot(w, r)
            if t <= 1e-12:
                streak += 1
                if streak >= DEGENERATE_STREAK:
                    bland = True
            else:
                streak = 0
                bland = False

    def _ratio_test(self, w, direction, q, bland):
        t_best = self.hi[q] - self.lo[q]
        r_best, to_upper = -1, False
        if self.m == 0:
            return t_best, r_best, to_upper
        xb = self.x[self.basis]
        lb = self.lo[self.basis]
        ub = self.hi[self.basis]
        dw = direction * w
        with np.errstate(divide="ignore", invalid="ignore"):
            down = dw > PIVOT_TOL
            up = dw < -PIVOT_TOL
            ratios = np.full(self.m, np.inf)
            ratios[down] = (xb[down] - lb[down]) / dw[down]
            ratios[up] = (ub[up] - xb[up]) / (-dw[up])
        ratios = np.maximum(ratios, 0.0)
        finite = np.isfinite(ratios)
        if not finite.any():
            return t_best, r_best, to_upper
        t_min = ratios[finite].min()
        if t_min >= t_best:
            return t_best, r_best, to_upper
        # Harris-style second pass: among near-minimal ratios take the largest pivot
        ties = np.flatnonzero(ratios <= t_min + 1e-12 * max(1.0, t_min))
        if bland:
            r = int(ties[np.argmin(self.basis[ties])])
        else:
            r = int(ties[np.argmax(np.abs(w[ties]))])
        return ratios[r], r, bool(up[r])

    def _pivot(self, w, r):
        piv = w[r]
        row = self.Binv[r] / piv
        # in-place rank-one update; Binv is kept Fortran-ordered so BLAS can overwrite it
        self.Binv = dger(-1.0, w, row, a=self.Binv, overwrite_a=True)
        self.Binv[r] = row
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= REFACTOR_EVERY:
            self.refactor()


def _equilibrate(A):
    """Row then column scaling factors bringing every max |a_ij| to one."""
    m, n = A.shape
    absA = np.abs(A)
    rmax = absA.max(axis=1) if n else np.ones(m)
    rs = np.where(rmax > 0, 1.0 / np.where(rmax > 0, rmax, 1.0), 1.0)
    absA = absA * rs[:, None]
    cmax = absA.max(axis=0) if m else np.ones(n)
    cs = np.where(cmax > 0, 1.0 / np.where(cmax > 0, cmax, 1.0), 1.0)
    return rs, cs


def simplex_solve(lp: LinearProgram, max_iter: int = 50_000) -> Solution:
    """Solve the continuous relaxation of ``lp`` (integrality flags are ignored)."""
    m, n = lp.n_rows, lp.n_vars
    rs, cs = _equilibrate(lp.A)
    # scaled problem: x = cs * xs, rows multiplied by rs
    A = lp.A * rs[:, None] * cs[None, :]
    b = lp.b * rs
    lo = lp.lo / cs
    hi = lp.hi / cs
    cost = -lp.c * cs

    slo = np.zeros(m)
    shi = np.zeros(m)
    senses = np.asarray(lp.senses, object)
    shi[senses == "<="] = np.inf
    slo[senses == ">="] = -np.inf

    x0 = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    resid = b - A @ x0
    s0 = np.clip(resid, slo, shi)
    gap = resid - s0
    art_rows = np.flatnonzero(np.abs(gap) > FEAS_TOL)
    art_sign = np.sign(gap[art_rows])

    tab = _Tableau(A, b, np.concatenate([lo, slo]), np.concatenate([hi, shi]), art_rows, art_sign)
    tab.x[:n] = x0
    tab.state[:n] = np.where(np.isfinite(lo), _AT_LO, np.where(np.isfinite(hi), _AT_HI, _FREE))
    tab.x[n:n + m] = s0
    tab.basis[:] = n + np.arange(m)
    tab.state[n:n + m] = _BASIC
    for k, i in enumerate(art_rows):
        # the slack leaves for the artificial and sits at its violated bound
        j_slack = n + i
        tab.x[j_slack] = s0[i]
        tab.state[j_slack] = _AT_HI if (np.isfinite(shi[i]) and s0[i] == shi[i] and shi[i] != slo[i]) else _AT_LO
        j_art = n + m + k
        tab.basis[i] = j_art
        tab.state[j_art] = _BASIC
        tab.x[j_art] = abs(gap[i])
    tab.refactor()

    allow = np.ones(tab.n_tot, bool)
    if len(art_rows):
        phase1_cost = np.zeros(tab.n_tot)
        phase1_cost[n + m:] = 1.0
        status = tab.run(phase1_cost, max_iter, allow)
        infeas = tab.x[n + m:].sum()
        if status == "limit":
            return Solution("limit", iterations=tab.iterations)
        if infeas > 1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
            return Solution("infeasible", iterations=tab.iterations)
        tab.hi[n + m:] = 0.0
        tab.x[n + m:] = np.clip(tab.x[n + m:], 0.0, 0.0)
        allow[n + m:] = False
        tab.refactor()

    phase2_cost = np.zeros(tab.n_tot)
    phase2_cost[:n] = cost
    status = tab.run(phase2_cost, max_iter, allow)
    if status != "optimal":
        return Solution(status, iterations=tab.iterations)
    tab.refactor()
    x = np.clip(tab.x[:n], lo, hi) * cs
    return Solution("optimal", x, float(lp.c @ x), iterations=tab.iterations)
