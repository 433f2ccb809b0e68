"""Idle-vehicle relocation: queue-constrained program and benchmark policies.

The core program assigns each zone's expected demand to one zone of idle
vehicles and chooses integer relocation flows between zones, minimizing
customer access time plus theta-weighted relocation cost. The anticipatory
variant additionally enforces per-zone queue-intensity limits built from
the utilization thresholds; relaxing that family gives the myopic variant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import milp
from .geometry import Point
from .queueing import RhoTable

logger = logging.getLogger(__name__)

NONMYOPIC = "nonmyopic"
MYOPIC = "myopic"
BUSIEST = "busiest"
WAITING = "waiting"

POLICIES = (WAITING, BUSIEST, MYOPIC, NONMYOPIC)


@dataclass
class RelocationInstance:
    """Zone-level data for one relocation epoch.

    Rates are customers/minute; times are minutes between zone centroids.
    y[j] counts idle vehicles standing in zone j, B their total, C[j] the
    per-zone cap on stationed vehicles.
    """

    lam: np.ndarray
    mu: np.ndarray
    t: np.ndarray                   # access time, zone i -> zone j
    r: np.ndarray                   # relocation cost, zone i -> zone j
    y: np.ndarray
    C: np.ndarray
    theta: float
    rho_table: RhoTable

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        self.C = np.asarray(self.C, dtype=int)
        n = self.n
        if not (self.mu.shape == (n,) and self.t.shape == (n, n)
                and self.r.shape == (n, n) and self.y.shape == (n,) and self.C.shape == (n,)):
            raise ValueError("inconsistent instance dimensions")
        if (self.lam < 0).any() or (self.mu < 0).any():
            raise ValueError("rates must be >= 0")
        if (self.C < self.y).any():
            raise ValueError("per-zone caps below initial idle counts")
        if self.rho_table.m_max < int(self.C.max(initial=1)):
            raise ValueError("rho table shorter than the largest per-zone cap")

    @property
    def n(self) -> int:
        return int(self.lam.shape[0])

    @property
    def B(self) -> int:
        return int(self.y.sum())


@dataclass
class RelocationSolution:
    W: np.ndarray                   # integer flows i -> j
    X: np.ndarray                   # binary demand assignment i -> j
    Y: np.ndarray                   # fractional server activation, (n, C_max)
    S: np.ndarray
    D: np.ndarray
    objective: float
    myopic: bool
    node_count: int = 0

    def moved_vehicles(self) -> int:
        off = self.W.copy()
        np.fill_diagonal(off, 0)
        return int(off.sum())

    def relocation_minutes(self, r: np.ndarray) -> float:
        off = self.W.copy()
        np.fill_diagonal(off, 0)
        return float((off * r).sum())


class RelocationError(RuntimeError):
    pass


def build_instance(zone_state, idle_by_zone: Sequence[int], theta: float,
                   rho_table: RhoTable, centers: Sequence[Point],
                   metric, now: float,
                   caps: Optional[Sequence[int]] = None) -> Optional[RelocationInstance]:
    """Assemble the epoch's instance from learned state and the idle fleet.

    Demand rates are the smoothed per-zone forecasts including anticipated
    transit-exit arrivals in the coming epoch. Returns None when there are
    no idle vehicles to place (the epoch is skipped).
    """
    y = np.asarray(idle_by_zone, dtype=int)
    if y.sum() == 0:
        return None
    n = len(y)
    lam = np.array([zone_state.forecast_lambda(z, now) for z in range(n)])
    mu = np.array([zone_state.smoothed_mu(z) for z in range(n)])
    t = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                t[i, j] = metric.zone_minutes(i, j, centers)
    r = t.copy()
    B = int(y.sum())
    C = np.asarray(caps, dtype=int) if caps is not None else np.full(n, B, dtype=int)
    C = np.maximum(C, y)
    return RelocationInstance(lam=lam, mu=mu, t=t, r=r, y=y, C=C,
                              theta=theta, rho_table=rho_table)


# -- mixed-integer formulation ---------------------------------------------


def to_milp(instance: RelocationInstance, include_intensity: bool = True) -> milp.MilpProblem:
    """Emit the relocation program.

    Variables: X[i,j] binary assignment, Y[j,m] in [0,1] (ordered server
    activation, relaxed from binary), W[i,j] non-negative integer flows and
    S/D non-negative supply/demand aggregates. Constraint families: one
    assignment per demand zone; activation ordering; optional queue
    intensity; assignment only to activated zones; total activation equals
    the idle count; supply/demand definitions; outflow caps; and the flow
    balance linking post-relocation stock to activation.
    """
    ins = instance
    n, B = ins.n, ins.B
    prob = milp.MilpProblem("relocation")
    X = [[prob.add_var(f"X_{i}_{j}", milp.BINARY) for j in range(n)] for i in range(n)]
    Y = [[prob.add_var(f"Y_{j}_{m}", milp.CONTINUOUS, 0.0, 1.0)
          for m in range(1, int(ins.C[j]) + 1)] for j in range(n)]
    # each W row is capped by the zone's idle stock, implied by supply limits
    W = [[prob.add_var(f"W_{i}_{j}", milp.INTEGER, 0.0, float(ins.y[i]))
          for j in range(n)] for i in range(n)]
    S = [prob.add_var(f"S_{i}", milp.CONTINUOUS, 0.0, float(ins.y[i])) for i in range(n)]
    D = [prob.add_var(f"D_{j}", milp.CONTINUOUS, 0.0, float(B)) for j in range(n)]

    obj: dict[str, float] = {}
    for i in range(n):
        for j in range(n):
            obj[X[i][j]] = obj.get(X[i][j], 0.0) + ins.lam[i] * ins.t[i, j]
            obj[W[i][j]] = obj.get(W[i][j], 0.0) + ins.theta * ins.r[i, j]
    prob.set_objective(obj)

    for i in range(n):
        prob.add_constraint({X[i][j]: 1.0 for j in range(n)}, "==", 1.0, f"assign_{i}")
    for j in range(n):
        for m in range(2, int(ins.C[j]) + 1):
            prob.add_constraint({Y[j][m - 1]: 1.0, Y[j][m - 2]: -1.0}, "<=", 0.0,
                                f"order_{j}_{m}")
    if include_intensity:
        inc = ins.rho_table.increments()
        for j in range(n):
            coeffs = {X[i][j]: ins.lam[i] for i in range(n)}
            for m in range(1, int(ins.C[j]) + 1):
                coeffs[Y[j][m - 1]] = coeffs.get(Y[j][m - 1], 0.0) - ins.mu[j] * inc[m - 1]
            prob.add_constraint(coeffs, "<=", 0.0, f"intensity_{j}")
    for i in range(n):
        for j in range(n):
            coeffs = {X[i][j]: 1.0}
            if ins.C[j] >= 1:
                coeffs[Y[j][0]] = -1.0
            prob.add_constraint(coeffs, "<=", 0.0, f"open_{i}_{j}")
    prob.add_constraint({Y[j][m]: 1.0 for j in range(n) for m in range(int(ins.C[j]))},
                        "==", float(B), "total_active")
    for i in range(n):
        coeffs = {W[i][j]: 1.0 for j in range(n)}
        coeffs[S[i]] = -1.0
        prob.add_constraint(coeffs, "==", 0.0, f"supply_{i}")
    for j in range(n):
        coeffs = {W[i][j]: 1.0 for i in range(n)}
        coeffs[D[j]] = -1.0
        prob.add_constraint(coeffs, "==", 0.0, f"demand_{j}")
    for j in range(n):
        prob.add_constraint({S[j]: 1.0}, "<=", float(ins.y[j]), f"outflow_{j}")
    for j in range(n):
        coeffs = {D[j]: -1.0, S[j]: 1.0}
        for m in range(int(ins.C[j])):
            coeffs[Y[j][m]] = coeffs.get(Y[j][m], 0.0) + 1.0
        prob.add_constraint(coeffs, "<=", float(ins.y[j]), f"balance_{j}")
    return prob


def _unpack(instance: RelocationInstance, sol: milp.MilpSolution,
            myopic: bool) -> RelocationSolution:
    n = instance.n
    cmax = int(instance.C.max(initial=0))
    X = np.zeros((n, n))
    W = np.zeros((n, n), dtype=int)
    Y = np.zeros((n, cmax))
    S = np.zeros(n)
    D = np.zeros(n)
    for i in range(n):
        S[i] = sol.values[f"S_{i}"]
        D[i] = sol.values[f"D_{i}"]
        for j in range(n):
            X[i, j] = round(sol.values[f"X_{i}_{j}"])
            W[i, j] = round(sol.values[f"W_{i}_{j}"])
        for m in range(1, int(instance.C[i]) + 1):
            Y[i, m - 1] = sol.values[f"Y_{i}_{m}"]
    return RelocationSolution(W=W, X=X, Y=Y, S=S, D=D,
                              objective=float(sol.objective), myopic=myopic,
                              node_count=sol.node_count)


def max_zone_capacity(rho_table: RhoTable, slots: int, stationed: float,
                      must_serve: bool = True) -> float:
    """Largest capacity multiplier a zone can reach with its stationed count.

    The activation variables form a staircase (each in [0,1], ordered,
    summing to the stationed count); capacity is the increment-weighted sum,
    maximized at an extreme point: a prefix of ones, one uniform fractional
    block, zeros. A zone that serves demand must fully activate its first
    slot. Returns the multiplier on mu (0 when serving is impossible).
    """
    if stationed <= 0 or slots < 1:
        return 0.0
    inc = rho_table.increments()[:slots]
    prefix = [0.0]
    for v in inc:
        prefix.append(prefix[-1] + v)
    best = 0.0
    a_min = 1 if must_serve else 0
    for a in range(a_min, min(int(stationed), slots) + 1):
        rem = stationed - a
        if rem <= 1e-12:
            best = max(best, prefix[a])
            continue
        for k in range(1, slots - a + 1):
            c = rem / k
            if c <= 1.0 + 1e-12:
                best = max(best, prefix[a] + min(c, 1.0) * (prefix[a + k] - prefix[a]))
    return best


def intensity_certainly_infeasible(instance: RelocationInstance) -> bool:
    """Cheap proof of infeasibility of the queue-intensity family.

    The activation variables sum to B and each multiplies one threshold
    increment, so total capacity never exceeds mu_max times B times the
    largest increment any zone can reach. Demand beyond that bound cannot
    be covered by any assignment.
    """
    total = float(instance.lam.sum())
    if total == 0.0:
        return False
    best_mu = float(instance.mu.max(initial=0.0))
    slots = int(instance.C.max(initial=0))
    if slots < 1 or best_mu <= 0.0:
        return True
    inc_max = max(instance.rho_table.increments()[:slots])
    return total > best_mu * inc_max * instance.B + 1e-12


def solve_nonmyopic(instance: RelocationInstance, gap: float = 0.0,
                    node_limit: int = 100_000) -> RelocationSolution:
    """Solve with the queue-intensity family; raises if infeasible.

    When the node budget runs out, the best feasible plan found is used and
    the remaining optimality gap is logged.
    """
    if intensity_certainly_infeasible(instance):
        raise RelocationError("anticipatory relocation program infeasible: "
                              "demand exceeds the best deployable capacity")
    sol = milp.solve(to_milp(instance, include_intensity=True), gap=gap,
                     node_limit=node_limit)
    if sol.status == milp.LIMIT:
        logger.info("relocation node budget hit; using best found (gap %.2g)", sol.gap)
    elif sol.status != milp.OPTIMAL:
        raise RelocationError(f"anticipatory relocation program {sol.status}: {sol.message}")
    return _unpack(instance, sol, myopic=False)


def solve_myopic(instance: RelocationInstance, gap: float = 0.0,
                 node_limit: int = 100_000) -> RelocationSolution:
    """Identical program without the queue-intensity constraints."""
    sol = milp.solve(to_milp(instance, include_intensity=False), gap=gap,
                     node_limit=node_limit)
    if sol.status == milp.LIMIT:
        logger.info("relocation node budget hit; using best found (gap %.2g)", sol.gap)
    elif sol.status != milp.OPTIMAL:
        raise RelocationError(f"myopic relocation program {sol.status}: {sol.message}")
    return _unpack(instance, sol, myopic=True)


def solve_with_fallback(instance: RelocationInstance, gap: float = 0.0,
                        node_limit: int = 100_000) -> tuple[RelocationSolution, bool]:
    """Anticipatory solve with myopic fallback on infeasible epochs.

    Demand can exceed the serviceable intensity of every assignment, in
    which case the intensity family admits no solution; the epoch is then
    rebalanced myopically. Returns (solution, fell_back).
    """
    try:
        return solve_nonmyopic(instance, gap=gap, node_limit=node_limit), False
    except RelocationError:
        logger.info("intensity constraints infeasible; falling back to myopic epoch")
        return solve_myopic(instance, gap=gap, node_limit=node_limit), True


def check_solution(instance: RelocationInstance, sol: RelocationSolution,
                   tol: float = 1e-6) -> list[str]:
    """Every constraint family as an independent predicate; returns violations."""
    ins = instance
    n, B = ins.n, ins.B
    bad = []
    if not np.allclose(sol.X.sum(axis=1), 1.0, atol=tol):
        bad.append("assignment rows")
    for j in range(n):
        ys = sol.Y[j, :int(ins.C[j])]
        if any(ys[m] > ys[m - 1] + tol for m in range(1, len(ys))):
            bad.append(f"activation order zone {j}")
        if (ys < -tol).any() or (ys > 1 + tol).any():
            bad.append(f"activation bounds zone {j}")
    if not sol.myopic:
        inc = ins.rho_table.increments()
        for j in range(n):
            cap = ins.mu[j] * sum(sol.Y[j, m] * inc[m] for m in range(int(ins.C[j])))
            if float(ins.lam @ sol.X[:, j]) > cap + tol:
                bad.append(f"intensity zone {j}")
    for i in range(n):
        for j in range(n):
            if sol.X[i, j] > sol.Y[j, 0] + tol:
                bad.append(f"assignment to closed zone ({i},{j})")
    if abs(sol.Y.sum() - B) > tol:
        bad.append("total activation")
    if not np.allclose(sol.W.sum(axis=1), sol.S, atol=tol):
        bad.append("supply definition")
    if not np.allclose(sol.W.sum(axis=0), sol.D, atol=tol):
        bad.append("demand definition")
    if (sol.S > ins.y + tol).any():
        bad.append("outflow caps")
    for j in range(n):
        if -sol.D[j] + sol.S[j] - ins.y[j] + sol.Y[j].sum() > tol:
            bad.append(f"flow balance zone {j}")
    if (sol.W < -tol).any() or (sol.S < -tol).any() or (sol.D < -tol).any():
        bad.append("nonnegativity")
    return bad


# -- converting solutions into vehicle orders ---------------------------------


def plan_moves(solution: RelocationSolution, idle_ids_by_zone: Sequence[Sequence[int]],
               centroids: Sequence[Point]) -> list[tuple[int, Point, int]]:
    """Flows to concrete (vehicle id, target point, target zone) orders.

    Within a zone the lowest vehicle ids relocate first; self-flows produce
    no orders.
    """
    orders = []
    for i, ids in enumerate(idle_ids_by_zone):
        pool = sorted(ids)
        for j in range(solution.W.shape[1]):
            if i == j:
                continue
            for _ in range(int(solution.W[i, j])):
                if not pool:
                    raise RelocationError(f"zone {i}: more outflow than idle vehicles")
                orders.append((pool.pop(0), centroids[j], j))
    return orders


def busiest_zone_policy(idle_vehicles: Sequence[tuple[int, Point]], zone_state,
                        centroids: Sequence[Point], rng: np.random.Generator,
                        metric) -> list[tuple[int, Point, int]]:
    """Send idle vehicles toward the busiest zone, with a stochastic threshold.

    Each idle vehicle draws a willingness threshold uniform on (0.5, 1] and
    relocates iff the probability of at least one arrival at the busiest
    zone during its drive there, 1 - exp(-lam * t), reaches the threshold.
    """
    lams = zone_state.smoothed_lambdas()
    busiest = int(np.argmax(lams))
    lam = lams[busiest]
    orders = []
    for vid, pos in idle_vehicles:
        threshold = 0.5 + 0.5 * float(rng.uniform(0.0, 1.0))
        drive = metric.minutes(pos, centroids[busiest], "vehicle")
        p_hit = 1.0 - np.exp(-lam * drive)
        if p_hit >= threshold:
            orders.append((vid, centroids[busiest], busiest))
    return orders


def waiting_policy() -> list[tuple[int, Point, int]]:
    """Idle vehicles stay where they are until dispatched."""
    return []
