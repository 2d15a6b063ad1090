"""Small LP/MILP toolbox used by the day-ahead and hours-ahead planners.

Two backends sit behind the same interface: ``"simplex"`` (the bundled
revised simplex with branch-and-bound) and ``"highs"`` (SciPy's HiGHS).
"""

from __future__ import annotations

import numpy as np

from .branch_bound import branch_and_bound
from .lp import LinearProgram, LPBuilder, Solution, dump_lp, load_lp
from .simplex import simplex_solve

__all__ = ["LinearProgram", "LPBuilder", "Solution", "dump_lp", "load_lp",
           "solve_lp", "solve_milp", "BACKENDS", "DEFAULT_BACKEND"]

BACKENDS = ("simplex", "highs")
DEFAULT_BACKEND = "simplex"


def _highs_lp(lp: LinearProgram) -> Solution:
    from scipy.optimize import linprog

    senses = np.asarray(lp.senses, object)
    le = senses == "<="
    ge = senses == ">="
    eq = senses == "="
    A_ub = np.vstack([lp.A[le], -lp.A[ge]])
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]])
    kw = {}
    if A_ub.shape[0]:
        kw.update(A_ub=A_ub, b_ub=b_ub)
    if eq.any():
        kw.update(A_eq=lp.A[eq], b_eq=lp.b[eq])
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
              for lo, hi in zip(lp.lo, lp.hi)]
    res = linprog(-lp.c, bounds=bounds, method="highs", **kw)
    if res.status == 0:
        x = np.clip(res.x, lp.lo, lp.hi)
        return Solution("optimal", x, float(lp.c @ x), iterations=int(res.nit))
    status = {2: "infeasible", 3: "unbounded"}.get(res.status, "limit")
    return Solution(status)


def _highs_milp(lp: LinearProgram) -> Solution:
    from scipy.optimize import Bounds, LinearConstraint, milp

    senses = np.asarray(lp.senses, object)
    lower = np.where(senses == "<=", -np.inf, lp.b)
    upper = np.where(senses == ">=", np.inf, lp.b)
    cons = [LinearConstraint(lp.A, lower, upper)] if lp.n_rows else []
    res = milp(-lp.c, constraints=cons, integrality=lp.integrality.astype(int),
               bounds=Bounds(lp.lo, lp.hi), options={"mip_rel_gap": 0.0})
    if res.status == 0:
        x = np.clip(res.x, lp.lo, lp.hi)
        x[lp.integrality] = np.round(x[lp.integrality])
        return Solution("optimal", x, float(lp.c @ x))
    status = {2: "infeasible", 3: "unbounded"}.get(res.status, "limit")
    return Solution(status)


def _check(lp: LinearProgram, backend: str) -> None:
    if not isinstance(lp, LinearProgram):
        raise TypeError("expected a LinearProgram")
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    # re-validate dimensions in case arrays were mutated after construction
    if lp.A.shape != (len(lp.b), len(lp.c)) or len(lp.lo) != len(lp.c) or len(lp.hi) != len(lp.c):
        raise ValueError("linear program dimensions are inconsistent")


def solve_lp(lp: LinearProgram, backend: str = DEFAULT_BACKEND) -> Solution:
    """Maximise a continuous linear program."""
    _check(lp, backend)
    if lp.has_integers:
        raise ValueError("solve_lp received integrality flags; use solve_milp")
    if backend == "highs":
        return _highs_lp(lp)
    return simplex_solve(lp)


def solve_milp(lp: LinearProgram, backend: str = DEFAULT_BACKEND, gap: float = 1e-6) -> Solution:
    """Maximise a linear program with binary variables."""
    _check(lp, backend)
    if not lp.has_integers:
        return solve_lp(lp, backend)
    if backend == "highs":
        return _highs_milp(lp)
    return branch_and_bound(lp, simplex_solve, gap=gap)
