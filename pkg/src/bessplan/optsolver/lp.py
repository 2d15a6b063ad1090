"""Linear program container, a small builder, and a plain-text dump format.

Dump grammar (one record per line, ``#`` starts a comment)::

    vars <n> rows <m>
    obj <c_0> <c_1> ... <c_{n-1}>          # maximised
    var <j> <lo> <hi> <C|B> [name]         # C continuous, B binary
    row <sense> <rhs> [family] : <j>:<a_j> <j>:<a_j> ...

``sense`` is one of ``<=``, ``=``, ``>=``; infinite bounds are ``inf``/``-inf``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SENSES = ("<=", "=", ">=")


@dataclass(frozen=True)
class LinearProgram:
    """Maximise ``c @ x`` subject to ``A x (sense) b`` and ``lo <= x <= hi``."""

    c: np.ndarray
    A: np.ndarray
    senses: tuple
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    integrality: np.ndarray = None
    families: tuple = None
    var_names: tuple = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        A = np.asarray(self.A, dtype=float)
        n = c.shape[0]
        if A.ndim != 2:
            A = A.reshape(0, n) if A.size == 0 else A
        if A.ndim != 2 or A.shape[1] != n:
            raise ValueError(f"constraint matrix shape {A.shape} does not match {n} variables")
        m = A.shape[0]
        b = np.asarray(self.b, dtype=float).reshape(-1)
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if b.shape[0] != m or len(self.senses) != m:
            raise ValueError("rhs and senses must have one entry per row")
        if lo.shape[0] != n or hi.shape[0] != n:
            raise ValueError("bounds must have one entry per variable")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        if any(s not in SENSES for s in self.senses):
            raise ValueError(f"senses must be drawn from {SENSES}")
        integ = np.zeros(n, bool) if self.integrality is None else np.asarray(self.integrality, bool)
        if integ.shape[0] != n:
            raise ValueError("integrality must have one flag per variable")
        if np.any(integ & ((lo < 0) | (hi > 1))):
            raise ValueError("integer variables must be binaries with bounds inside [0, 1]")
        fam = tuple(self.families) if self.families is not None else ("",) * m
        if len(fam) != m:
            raise ValueError("families must have one label per row")
        for name, val in (("c", c), ("A", A), ("b", b), ("lo", lo), ("hi", hi),
                          ("integrality", integ), ("families", fam),
                          ("senses", tuple(self.senses))):
            object.__setattr__(self, name, val)

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def has_integers(self) -> bool:
        return bool(self.integrality.any())

    def with_bounds(self, lo=None, hi=None) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.senses, self.b,
                             self.lo if lo is None else lo, self.hi if hi is None else hi,
                             self.integrality, self.families, self.var_names)

    def relaxed(self) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.senses, self.b, self.lo, self.hi,
                             None, self.families, self.var_names)

    def drop_rows(self, mask) -> "LinearProgram":
        keep = ~np.asarray(mask, bool)
        return LinearProgram(self.c, self.A[keep], tuple(np.asarray(self.senses, object)[keep]),
                             self.b[keep], self.lo, self.hi, self.integrality,
                             tuple(np.asarray(self.families, object)[keep]), self.var_names)

    def violations(self, x, tol: float = 1e-6) -> list[tuple[str, int, float]]:
        """List ``(kind, index, amount)`` for every bound or row violated by ``x``."""
        x = np.asarray(x, float)
        out = []
        for j in np.flatnonzero(x < self.lo - tol):
            out.append(("lower_bound", int(j), float(self.lo[j] - x[j])))
        for j in np.flatnonzero(x > self.hi + tol):
            out.append(("upper_bound", int(j), float(x[j] - self.hi[j])))
        act = self.A @ x
        for i, (s, a, rhs) in enumerate(zip(self.senses, act, self.b)):
            scale = max(1.0, abs(rhs))
            if s == "<=" and a > rhs + tol * scale:
                out.append((self.families[i] or "row", i, float(a - rhs)))
            elif s == ">=" and a < rhs - tol * scale:
                out.append((self.families[i] or "row", i, float(rhs - a)))
            elif s == "=" and abs(a - rhs) > tol * scale:
                out.append((self.families[i] or "row", i, float(abs(a - rhs))))
        return out


@dataclass
class Solution:
    status: str
    values: np.ndarray = None
    objective_value: float = float("nan")
    iterations: int = 0
    nodes: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class LPBuilder:
    """Incremental construction of a :class:`LinearProgram`."""

    c: list = field(default_factory=list)
    lo: list = field(default_factory=list)
    hi: list = field(default_factory=list)
    integ: list = field(default_factory=list)
    names: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def add_var(self, name: str, lo: float = 0.0, hi: float = np.inf, obj: float = 0.0,
                binary: bool = False) -> int:
        self.c.append(float(obj))
        self.lo.append(float(lo))
        self.hi.append(float(hi))
        self.integ.append(bool(binary))
        self.names.append(name)
        return len(self.c) - 1

    def add_vars(self, prefix: str, count: int, lo=0.0, hi=np.inf, obj=0.0,
                 binary: bool = False) -> np.ndarray:
        lo = np.broadcast_to(lo, (count,))
        hi = np.broadcast_to(hi, (count,))
        obj = np.broadcast_to(obj, (count,))
        return np.array([self.add_var(f"{prefix}[{k}]", lo[k], hi[k], obj[k], binary)
                         for k in range(count)], dtype=int)

    def add_row(self, coefs: dict, sense: str, rhs: float, family: str = "") -> int:
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        self.rows.append((dict(coefs), sense, float(rhs), family))
        return len(self.rows) - 1

    def build(self) -> LinearProgram:
        n, m = len(self.c), len(self.rows)
        A = np.zeros((m, n))
        senses, b, fam = [], np.zeros(m), []
        for i, (coefs, s, rhs, f) in enumerate(self.rows):
            for j, a in coefs.items():
                A[i, j] += a
            senses.append(s)
            b[i] = rhs
            fam.append(f)
        return LinearProgram(np.array(self.c), A, tuple(senses), b, np.array(self.lo),
                             np.array(self.hi), np.array(self.integ, bool), tuple(fam),
                             tuple(self.names))


def _fmt(v: float) -> str:
    return repr(float(v))


def dump_lp(lp: LinearProgram, path) -> None:
    lines = [f"vars {lp.n_vars} rows {lp.n_rows}",
             "obj " + " ".join(_fmt(v) for v in lp.c)]
    names = lp.var_names or ("",) * lp.n_vars
    for j in range(lp.n_vars):
        kind = "B" if lp.integrality[j] else "C"
        lines.append(f"var {j} {_fmt(lp.lo[j])} {_fmt(lp.hi[j])} {kind} {names[j]}".rstrip())
    for i in range(lp.n_rows):
        nz = np.flatnonzero(lp.A[i])
        terms = " ".join(f"{j}:{_fmt(lp.A[i, j])}" for j in nz)
        lines.append(f"row {lp.senses[i]} {_fmt(lp.b[i])} {lp.families[i]} : {terms}".replace("  :", " :"))
    Path(path).write_text("\n".join(lines) + "\n")


def load_lp(path) -> LinearProgram:
    n = m = None
    c = lo = hi = integ = names = None
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "vars":
            n, m = int(tok[1]), int(tok[3])
            lo, hi = np.zeros(n), np.zeros(n)
            integ = np.zeros(n, bool)
            names = [""] * n
        elif tok[0] == "obj":
            c = np.array([float(t) for t in tok[1:]])
        elif tok[0] == "var":
            j = int(tok[1])
            lo[j], hi[j] = float(tok[2]), float(tok[3])
            integ[j] = tok[4] == "B"
            names[j] = tok[5] if len(tok) > 5 else ""
        elif tok[0] == "row":
            head, _, tail = line.partition(":")
            htok = head.split()
            family = htok[3] if len(htok) > 3 else ""
            coefs = {}
            for term in tail.split():
                j, a = term.split(":")
                coefs[int(j)] = float(a)
            rows.append((coefs, htok[1], float(htok[2]), family))
        else:
            raise ValueError(f"unrecognised record {tok[0]!r}")
    if n is None or c is None:
        raise ValueError("missing header or objective line")
    A = np.zeros((len(rows), n))
    for i, (coefs, *_rest) in enumerate(rows):
        for j, a in coefs.items():
            A[i, j] = a
    if len(rows) != m:
        raise ValueError(f"expected {m} rows, found {len(rows)}")
    return LinearProgram(c, A, tuple(r[1] for r in rows), np.array([r[2] for r in rows]),
                         lo, hi, integ, tuple(r[3] for r in rows), tuple(names))
