"""Best-first branch-and-bound over binary variables."""

from __future__ import annotations

import heapq
import itertools
from typing import Callable

import numpy as np

from .lp import LinearProgram, Solution

INT_TOL = 1e-6


def _round_preserving(lp: LinearProgram, x: np.ndarray, binaries: np.ndarray) -> np.ndarray:
    """Round binaries one at a time, preferring the value that keeps the
    rows touching that binary satisfied at the current continuous point."""
    x = x.copy()
    act = lp.A @ x
    for j in binaries:
        v = x[j]
        order = (1.0, 0.0) if v >= 0.5 else (0.0, 1.0)
        rows = np.flatnonzero(lp.A[:, j])
        chosen = order[0]
        for cand in order:
            new_act = act[rows] + lp.A[rows, j] * (cand - v)
            ok = True
            for i, a in zip(rows, new_act):
                s, rhs = lp.senses[i], lp.b[i]
                tol = 1e-9 * max(1.0, abs(rhs))
                if (s == "<=" and a > rhs + tol) or (s == ">=" and a < rhs - tol) or \
                        (s == "=" and abs(a - rhs) > tol):
                    ok = False
                    break
            if ok:
                chosen = cand
                break
        chosen = min(max(chosen, lp.lo[j]), lp.hi[j])
        act[rows] += lp.A[rows, j] * (chosen - v)
        x[j] = chosen
    return x


def branch_and_bound(lp: LinearProgram, lp_solver: Callable[[LinearProgram], Solution],
                     gap: float = 1e-6, max_nodes: int = 20_000) -> Solution:
    binaries = np.flatnonzero(lp.integrality)
    relaxed = lp.relaxed()
    counter = itertools.count()
    incumbent: Solution | None = None
    total_iter = 0
    nodes = 0

    def solve_node(lo, hi):
        nonlocal total_iter, nodes
        sol = lp_solver(relaxed.with_bounds(lo, hi))
        total_iter += sol.iterations
        nodes += 1
        return sol

    def try_incumbent(sol):
        nonlocal incumbent
        x = _round_preserving(lp, sol.values, binaries)
        lo, hi = lp.lo.copy(), lp.hi.copy()
        lo[binaries] = hi[binaries] = np.round(x[binaries])
        cand = solve_node(lo, hi)
        if cand.optimal and (incumbent is None or cand.objective_value > incumbent.objective_value):
            cand.values[binaries] = np.round(cand.values[binaries])
            incumbent = cand

    root = solve_node(lp.lo.copy(), lp.hi.copy())
    if root.status in ("infeasible", "unbounded", "limit"):
        return Solution(root.status, iterations=total_iter, nodes=nodes)
    heap = [(-root.objective_value, next(counter), lp.lo.copy(), lp.hi.copy(), root)]
    heuristic_done = False
    while heap:
        neg_bound, _, lo, hi, sol = heapq.heappop(heap)
        if incumbent is not None and -neg_bound <= incumbent.objective_value + gap:
            break
        frac = np.abs(sol.values[binaries] - np.round(sol.values[binaries]))
        if frac.max(initial=0.0) <= INT_TOL:
            if incumbent is None or sol.objective_value > incumbent.objective_value:
                sol.values[binaries] = np.round(sol.values[binaries])
                incumbent = sol
            continue
        if not heuristic_done:
            heuristic_done = True
            try_incumbent(sol)
            if incumbent is not None and -neg_bound <= incumbent.objective_value + gap:
                break
        # most fractional binary, lowest index on ties
        j = int(binaries[np.argmax(np.round(-np.abs(sol.values[binaries] - 0.5), 12))])
        for value in (1.0, 0.0):
            clo, chi = lo.copy(), hi.copy()
            clo[j] = chi[j] = value
            child = solve_node(clo, chi)
            if child.status == "unbounded":
                return Solution("unbounded", iterations=total_iter, nodes=nodes)
            if not child.optimal:
                continue
            if incumbent is not None and child.objective_value <= incumbent.objective_value + gap:
                continue
            cfrac = np.abs(child.values[binaries] - np.round(child.values[binaries]))
            if cfrac.max(initial=0.0) <= INT_TOL:
                child.values[binaries] = np.round(child.values[binaries])
                incumbent = child
                continue
            heapq.heappush(heap, (-child.objective_value, next(counter), clo, chi, child))
        if nodes >= max_nodes:
            status = "limit"
            if incumbent is None:
                return Solution(status, iterations=total_iter, nodes=nodes)
            return Solution(status, incumbent.values, incumbent.objective_value, total_iter, nodes)
    if incumbent is None:
        return Solution("infeasible", iterations=total_iter, nodes=nodes)
    return Solution("optimal", incumbent.values, incumbent.objective_value, total_iter, nodes)
