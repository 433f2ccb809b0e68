"""Small mixed-integer linear programs with exact solutions.

Problems are built by name; solving delegates to the HiGHS engines shipped
with scipy (dual simplex for the relaxation, branch-and-bound for the mixed
program), which is deterministic for identical input. Solutions are checked
back against every constraint before they are returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np
from scipy.optimize import linprog, milp, Bounds, LinearConstraint

CONTINUOUS = "continuous"
BINARY = "binary"
INTEGER = "integer"

OPTIMAL = "optimal"
LIMIT = "limit"                    # budget exhausted; best found returned
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILED = "failed"

FEAS_TOL = 1e-6
INT_TOL = 1e-6

_LE, _EQ, _GE = "<=", "==", ">="
_SENSES = {_LE, _EQ, _GE, "=", "<", ">"}


@dataclass
class _Constraint:
    coeffs: dict[int, float]
    sense: str
    rhs: float
    name: str = ""


class MilpError(ValueError):
    pass


class MilpProblem:
    """Linear objective (minimize), named variables, linear constraints."""

    def __init__(self, name: str = "problem"):
        self.name = name
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        self._kind: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._obj: dict[int, float] = {}
        self._constraints: list[_Constraint] = []

    # -- construction --------------------------------------------------------

    def add_var(self, name: str, kind: str = CONTINUOUS,
                lb: float = 0.0, ub: float = np.inf) -> str:
        if name in self._index:
            raise MilpError(f"duplicate variable {name!r}")
        if kind == BINARY:
            lb, ub = 0.0, 1.0
        if kind not in (CONTINUOUS, BINARY, INTEGER):
            raise MilpError(f"unknown variable kind {kind!r}")
        if lb > ub:
            raise MilpError(f"variable {name!r}: lb {lb} > ub {ub}")
        if kind == INTEGER and not np.isfinite(ub):
            raise MilpError(f"integer variable {name!r} needs a finite upper bound")
        self._index[name] = len(self._names)
        self._names.append(name)
        self._kind.append(kind)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        return name

    def set_objective(self, coeffs: Mapping[str, float]) -> None:
        self._obj = {self._index[n]: float(c) for n, c in coeffs.items()}

    def add_constraint(self, coeffs: Mapping[str, float], sense: str, rhs: float,
                       name: str = "") -> None:
        if sense not in _SENSES:
            raise MilpError(f"unknown constraint sense {sense!r}")
        sense = {"=": _EQ, "<": _LE, ">": _GE}.get(sense, sense)
        packed = {self._index[n]: float(c) for n, c in coeffs.items() if c != 0.0}
        self._constraints.append(_Constraint(packed, sense, float(rhs), name))

    # -- introspection --------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self._names)

    @property
    def num_constraints(self) -> int:
        return len(self._constraints)

    def variable_names(self) -> list[str]:
        return list(self._names)

    def kinds(self) -> list[str]:
        return list(self._kind)

    def _matrices(self):
        n = self.num_vars
        c = np.zeros(n)
        for j, v in self._obj.items():
            c[j] = v
        rows = len(self._constraints)
        a = np.zeros((rows, n))
        lo = np.empty(rows)
        hi = np.empty(rows)
        for i, con in enumerate(self._constraints):
            for j, v in con.coeffs.items():
                a[i, j] = v
            if con.sense == _LE:
                lo[i], hi[i] = -np.inf, con.rhs
            elif con.sense == _GE:
                lo[i], hi[i] = con.rhs, np.inf
            else:
                lo[i], hi[i] = con.rhs, con.rhs
        return c, a, lo, hi

    def check(self, values: Mapping[str, float], tol: float = FEAS_TOL) -> list[str]:
        """Names of constraints (and bounds) violated by the assignment."""
        x = np.array([values[n] for n in self._names])
        bad = []
        for j, n in enumerate(self._names):
            if x[j] < self._lb[j] - tol or x[j] > self._ub[j] + tol:
                bad.append(f"bounds({n})")
            if self._kind[j] in (BINARY, INTEGER) and abs(x[j] - round(x[j])) > INT_TOL:
                bad.append(f"integrality({n})")
        for i, con in enumerate(self._constraints):
            lhs = sum(v * x[j] for j, v in con.coeffs.items())
            label = con.name or f"c{i}"
            if con.sense == _LE and lhs > con.rhs + tol:
                bad.append(label)
            elif con.sense == _GE and lhs < con.rhs - tol:
                bad.append(label)
            elif con.sense == _EQ and abs(lhs - con.rhs) > tol:
                bad.append(label)
        return bad

    def write_lp(self, path) -> None:
        """Dump in LP text format for cross-checks with external solvers."""
        def term(j, v, first):
            sign = "-" if v < 0 else ("" if first else "+")
            return f"{sign} {abs(v):.12g} {self._names[j]} "
        with open(path, "w") as f:
            f.write(f"\\ {self.name}\nMinimize\n obj: ")
            first = True
            for j in sorted(self._obj):
                if self._obj[j] == 0:
                    continue
                f.write(term(j, self._obj[j], first))
                first = False
            if first:
                f.write("0 " + self._names[0] if self._names else "0")
            f.write("\nSubject To\n")
            for i, con in enumerate(self._constraints):
                f.write(f" {con.name or f'c{i}'}: ")
                first = True
                for j in sorted(con.coeffs):
                    f.write(term(j, con.coeffs[j], first))
                    first = False
                op = {"<=": "<=", ">=": ">=", "==": "="}[con.sense]
                f.write(f"{op} {con.rhs:.12g}\n")
            f.write("Bounds\n")
            for j, n in enumerate(self._names):
                ub = "+inf" if not np.isfinite(self._ub[j]) else f"{self._ub[j]:.12g}"
                f.write(f" {self._lb[j]:.12g} <= {n} <= {ub}\n")
            ints = [n for j, n in enumerate(self._names) if self._kind[j] != CONTINUOUS]
            if ints:
                f.write("General\n " + " ".join(ints) + "\n")
            f.write("End\n")


@dataclass
class MilpSolution:
    status: str
    objective: Optional[float]
    values: dict[str, float] = field(default_factory=dict)
    node_count: int = 0
    gap: float = 0.0
    message: str = ""

    def __getitem__(self, name: str) -> float:
        return self.values[name]


def solve_lp(problem: MilpProblem) -> MilpSolution:
    """Optimal solution of the continuous relaxation (integrality dropped)."""
    c, a, lo, hi = problem._matrices()
    bounds = list(zip(problem._lb, problem._ub))
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for i in range(a.shape[0]):
        if lo[i] == hi[i]:
            a_eq.append(a[i]); b_eq.append(lo[i])
        else:
            if np.isfinite(hi[i]):
                a_ub.append(a[i]); b_ub.append(hi[i])
            if np.isfinite(lo[i]):
                a_ub.append(-a[i]); b_ub.append(-lo[i])
    res = linprog(c,
                  A_ub=np.array(a_ub) if a_ub else None,
                  b_ub=np.array(b_ub) if b_ub else None,
                  A_eq=np.array(a_eq) if a_eq else None,
                  b_eq=np.array(b_eq) if b_eq else None,
                  bounds=bounds, method="highs")
    status = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, FAILED)
    if status != OPTIMAL:
        return MilpSolution(status=status, objective=None, message=res.message)
    values = dict(zip(problem._names, map(float, res.x)))
    return MilpSolution(status=OPTIMAL, objective=float(res.fun), values=values,
                        node_count=0, message=res.message)


def solve(problem: MilpProblem, gap: float = 0.0,
          node_limit: int = 100_000) -> MilpSolution:
    """Proven-optimal solution of the mixed-integer program.

    If the node budget is exhausted the best solution found is returned with
    its reported gap. Identical problems yield identical solutions.
    """
    c, a, lo, hi = problem._matrices()
    integrality = np.array([0 if k == CONTINUOUS else 1 for k in problem.kinds()])
    bounds = Bounds(np.array(problem._lb), np.array(problem._ub))
    constraints = LinearConstraint(a, lo, hi) if a.shape[0] else ()
    res = milp(c, constraints=constraints, integrality=integrality, bounds=bounds,
               options={"mip_rel_gap": gap, "node_limit": node_limit, "disp": False})
    if res.status == 2:
        return MilpSolution(status=INFEASIBLE, objective=None, message=res.message)
    if res.x is None:
        return MilpSolution(status=FAILED, objective=None, message=res.message)
    values = {}
    for name, kind, v in zip(problem._names, problem.kinds(), res.x):
        v = float(v)
        if kind != CONTINUOUS:
            if abs(v - round(v)) > INT_TOL:
                return MilpSolution(status=FAILED, objective=None,
                                    message=f"non-integral value {v} for {name}")
            v = float(round(v))
        values[name] = v
    bad = problem.check(values)
    if bad:
        return MilpSolution(status=FAILED, objective=None,
                            message=f"solution violates {bad[:5]}")
    node_count = int(getattr(res, "mip_node_count", 0) or 0)
    rep_gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
    status = OPTIMAL if res.status == 0 else LIMIT
    return MilpSolution(status=status, objective=float(res.fun), values=values,
                        node_count=node_count, gap=rep_gap, message=res.message)
