"""Vehicle tours: pickup/dropoff sequencing, insertion and local search.

A tour is a value object anchored at the vehicle's current position and
clock time. Operations never mutate their input tour; they return new ones,
so candidate insertions for different vehicles can be evaluated in parallel.

Planned timing is pure travel time: earliest-service (ready) times carried
by stops are honored by the simulation when it executes the tour, not here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import Point

PICKUP = "pickup"
DROPOFF = "dropoff"
REPOSITION = "reposition"


class TourError(ValueError):
    """Tour contract violation (precedence or capacity)."""


@dataclass(frozen=True)
class Stop:
    kind: str
    location: Point
    request_id: Optional[int] = None
    request_time: float = 0.0        # journey reference time of the passenger
    ready_time: float = 0.0          # earliest time the passenger is at the stop

    def __post_init__(self):
        if self.kind in (PICKUP, DROPOFF) and self.request_id is None:
            raise TourError(f"{self.kind} stop needs a request id")
        if self.kind == REPOSITION and self.request_id is not None:
            raise TourError("reposition stop carries no request id")


class Tour:
    """Ordered stop sequence with an anchor (position, clock, onboard set)."""

    __slots__ = ("anchor_pos", "anchor_time", "stops", "onboard", "_cache")

    def __init__(self, anchor_pos: Point, anchor_time: float,
                 stops: Sequence[Stop] = (), onboard: Iterable[int] = ()):
        self.anchor_pos = anchor_pos
        self.anchor_time = anchor_time
        self.stops = tuple(stops)
        self.onboard = frozenset(onboard)
        self._cache: dict = {}

    def __len__(self) -> int:
        return len(self.stops)

    def __repr__(self) -> str:
        tags = ",".join(f"{s.kind[0]}{s.request_id if s.request_id is not None else ''}"
                        for s in self.stops)
        return f"Tour(@{self.anchor_pos}, t={self.anchor_time:.2f}, [{tags}], onboard={sorted(self.onboard)})"

    def replace(self, stops: Sequence[Stop]) -> "Tour":
        return Tour(self.anchor_pos, self.anchor_time, stops, self.onboard)

    # cached geometry arrays, valid because tours are immutable
    def _arrays(self) -> tuple[np.ndarray, np.ndarray]:
        got = self._cache.get("arrays")
        if got is None:
            pts = np.empty((len(self.stops) + 1, 2), dtype=float)
            pts[0] = self.anchor_pos
            for i, s in enumerate(self.stops):
                pts[i + 1] = s.location
            legs_km = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
            got = (pts, legs_km)
            self._cache["arrays"] = got
        return got

    def occupancy_profile(self) -> np.ndarray:
        """Onboard count entering each insertion slot (length n+1, slot 0 = anchor)."""
        got = self._cache.get("occ")
        if got is None:
            occ = np.empty(len(self.stops) + 1, dtype=np.int64)
            occ[0] = len(self.onboard)
            for i, s in enumerate(self.stops):
                delta = 1 if s.kind == PICKUP else (-1 if s.kind == DROPOFF else 0)
                occ[i + 1] = occ[i] + delta
            got = occ
            self._cache["occ"] = got
        return got

    def schedule(self, speed_km_min: float) -> np.ndarray:
        """Planned clock at the anchor and each stop, dwelling at unready pickups."""
        key = ("sched", speed_km_min)
        got = self._cache.get(key)
        if got is None:
            _, legs_km = self._arrays()
            clock = np.empty(len(self.stops) + 1)
            clock[0] = self.anchor_time
            for i, s in enumerate(self.stops):
                t = clock[i] + legs_km[i] / speed_km_min
                if s.kind == PICKUP and s.ready_time > t:
                    t = s.ready_time
                clock[i + 1] = t
            got = clock
            self._cache[key] = got
        return got


def tour_metrics(tour: Tour, speed_km_min: float) -> tuple[float, dict[int, float]]:
    """Tour length T (minutes) and per-passenger journey time Y.

    T is the pure travel time from the anchor through the last stop. The
    schedule clock behind Y additionally dwells at pickups whose passenger
    is not ready yet (a rider still on a train, say), so Y for a passenger
    is their dropoff clock minus their journey reference time; passengers
    already onboard accrue from their original request. Raises TourError on
    precedence or capacity violations.
    """
    key = ("metrics", speed_km_min)
    got = tour._cache.get(key)
    if got is not None:
        return got
    _, legs_km = tour._arrays()
    onboard = set(tour.onboard)
    picked = set()
    clock = tour.anchor_time
    travel = 0.0
    y: dict[int, float] = {}
    for i, stop in enumerate(tour.stops):
        leg = legs_km[i] / speed_km_min
        travel += leg
        clock += leg
        if stop.kind == PICKUP:
            if stop.request_id in picked or stop.request_id in onboard:
                raise TourError(f"request {stop.request_id} picked up twice")
            picked.add(stop.request_id)
            if stop.ready_time > clock:
                clock = stop.ready_time
        elif stop.kind == DROPOFF:
            if stop.request_id in picked:
                picked.discard(stop.request_id)
            elif stop.request_id in onboard:
                onboard.discard(stop.request_id)
            else:
                raise TourError(f"dropoff of {stop.request_id} precedes its pickup")
            y[stop.request_id] = clock - stop.request_time
    got = (travel, y)
    tour._cache[key] = got
    return got


def tour_cost(tour: Tour, speed_km_min: float, gamma: float, beta: float) -> float:
    """Weighted objective gamma*T + (1-gamma)*(beta*T^2 + sum of journey times)."""
    t, y = tour_metrics(tour, speed_km_min)
    return gamma * t + (1.0 - gamma) * (beta * t * t + sum(y.values()))


def validate(tour: Tour, q: int, allow_unpaired_dropoffs: bool = False) -> None:
    """Assert tour invariants: precedence, capacity q, pairing against onboard."""
    occ = tour.occupancy_profile()
    if int(occ.max(initial=len(tour.onboard))) > q:
        raise TourError(f"capacity exceeded: peak onboard {int(occ.max())} > q={q}")
    pending = set(tour.onboard)
    picked = set()
    for stop in tour.stops:
        if stop.kind == PICKUP:
            if stop.request_id in picked or stop.request_id in pending:
                raise TourError(f"request {stop.request_id} picked up twice")
            picked.add(stop.request_id)
        elif stop.kind == DROPOFF:
            if stop.request_id in picked:
                picked.discard(stop.request_id)
            elif stop.request_id in pending:
                pending.discard(stop.request_id)
            elif not allow_unpaired_dropoffs:
                raise TourError(f"dropoff of {stop.request_id} has no pickup and is not onboard")
    if picked:
        raise TourError(f"pickups without dropoffs: {sorted(picked)}")
    if pending:
        raise TourError(f"onboard requests without dropoff: {sorted(pending)}")


def _insertion_grids(tour: Tour, pickup_loc: Point, dropoff_loc: Point, q: int):
    """Per position pair (p, d): added path length, feasibility and timing.

    All distances in km. Entry [p, d] describes inserting the pickup before
    current stop p and the dropoff before current stop d (p == d adjacent,
    p == n appends). Returns None when capacity rules out every pair.
    """
    pts, legs_km = tour._arrays()
    n = len(tour.stops)
    occ = tour.occupancy_profile()
    if int(occ.min()) > q - 1:
        return None

    po = np.hypot(pts[:, 0] - pickup_loc[0], pts[:, 1] - pickup_loc[1])
    pw = np.hypot(pts[:, 0] - dropoff_loc[0], pts[:, 1] - dropoff_loc[1])
    ow = math.hypot(pickup_loc[0] - dropoff_loc[0], pickup_loc[1] - dropoff_loc[1])

    # detour of inserting one point u into slot s: before stop s (s<n) or appended
    dp = np.empty(n + 1)
    dd = np.empty(n + 1)
    dp[:n] = po[:n] + po[1:] - legs_km
    dp[n] = po[n]
    dd[:n] = pw[:n] + pw[1:] - legs_km
    dd[n] = pw[n]
    joint = np.empty(n + 1)
    joint[:n] = po[:n] + ow + pw[1:] - legs_km
    joint[n] = po[n] + ow

    delta = dp[:, None] + dd[None, :]
    np.fill_diagonal(delta, joint)

    # capacity: the new passenger rides across slots p..d, so the occupancy
    # entering each of those slots must leave one seat free
    feas = np.empty((n + 1, n + 1), dtype=bool)
    for p in range(n + 1):
        feas[p, p:] = np.maximum.accumulate(occ[p:]) <= q - 1
        feas[p, :p] = False
    if not feas.any():
        return None

    # dropoffs at stop index >= s shift with any delay introduced at slot s
    is_drop = np.fromiter((s.kind == DROPOFF for s in tour.stops), dtype=float,
                          count=n)
    dropcnt = np.zeros(n + 1)
    if n:
        dropcnt[:n] = np.cumsum(is_drop[::-1])[::-1]
    return {"n": n, "delta": delta, "feas": feas, "dropcnt": dropcnt,
            "po": po, "pw": pw, "dp": dp, "dd": dd, "joint": joint, "direct": ow}


def _argmin_masked(grid: np.ndarray, feas: np.ndarray) -> tuple[int, int]:
    masked = np.where(feas, grid, np.inf)
    flat = int(np.argmin(masked))
    return divmod(flat, masked.shape[1])


def evaluate_insertion(tour: Tour, pickup_loc: Point, dropoff_loc: Point,
                       q: int, speed_km_min: float) -> Optional[tuple[float, int, int]]:
    """Best (by added tour time) feasible position pair for a new request.

    Returns (delta_T_minutes, pickup_slot, dropoff_slot) or None when no
    position pair satisfies capacity. Slots index the current stop list;
    pickup_slot <= dropoff_slot, equal slots meaning an adjacent insertion.
    Ties break by smaller pickup slot, then smaller dropoff slot.
    """
    grids = _insertion_grids(tour, pickup_loc, dropoff_loc, q)
    if grids is None:
        return None
    p, d = _argmin_masked(grids["delta"], grids["feas"])
    return float(grids["delta"][p, d] / speed_km_min), p, d


def evaluate_insertion_by_cost(tour: Tour, pickup_loc: Point, dropoff_loc: Point,
                               q: int, speed_km_min: float, gamma: float,
                               beta: float, request_time: float,
                               ready_time: Optional[float] = None
                               ) -> Optional[tuple[float, float, int, int]]:
    """Best feasible position pair by the weighted tour-cost delta.

    The score of a pair is gamma*dT + (1-gamma)*(beta*(T'^2 - T^2) + dSumY),
    where dSumY covers the shifted dropoffs of passengers already in the
    tour and the new rider's own journey time. A not-yet-ready pickup (a
    rider still on a train) makes the vehicle dwell, which delays every
    later dropoff and is priced accordingly. Returns
    (delta_cost, delta_T, pickup_slot, dropoff_slot) in minutes, or None.
    """
    grids = _insertion_grids(tour, pickup_loc, dropoff_loc, q)
    if grids is None:
        return None
    if ready_time is None:
        ready_time = request_time
    t_old, _ = tour_metrics(tour, speed_km_min)
    d_t = grids["delta"] / speed_km_min
    t_new = t_old + d_t

    sched = tour.schedule(speed_km_min)
    arrive_pickup = sched + grids["po"] / speed_km_min
    dwell = np.maximum(ready_time - arrive_pickup, 0.0)
    shift_p = grids["dp"] / speed_km_min + dwell
    dd_min = grids["dd"] / speed_km_min
    dropcnt = grids["dropcnt"]
    y_shift = shift_p[:, None] * dropcnt[:, None] + dd_min[None, :] * dropcnt[None, :]
    np.fill_diagonal(y_shift, (grids["joint"] / speed_km_min + dwell) * dropcnt)

    ride_min = grids["direct"] / speed_km_min
    drop_clock = sched[None, :] + shift_p[:, None] + grids["pw"][None, :] / speed_km_min
    np.fill_diagonal(drop_clock, np.maximum(arrive_pickup, ready_time) + ride_min)
    y_new = np.maximum(drop_clock - request_time, ride_min)

    cost = gamma * d_t + (1.0 - gamma) * (beta * (t_new * t_new - t_old * t_old)
                                          + y_shift + y_new)
    p, d = _argmin_masked(cost, grids["feas"])
    return float(cost[p, d]), float(d_t[p, d]), p, d


def apply_insertion(tour: Tour, pickup: Stop, dropoff: Stop, p: int, d: int) -> Tour:
    stops = list(tour.stops)
    stops.insert(p, pickup)
    stops.insert(d + 1, dropoff)
    return tour.replace(stops)


def cheapest_insertion(tour: Tour, pickup: Stop, dropoff: Stop, q: int,
                       speed_km_min: float) -> Optional[tuple[Tour, float]]:
    """Insert the request at the feasible position pair minimizing tour time.

    Returns (new tour, exact added tour time) or None when the vehicle
    cannot take the request at any position (capacity).
    """
    best = evaluate_insertion(tour, pickup.location, dropoff.location, q, speed_km_min)
    if best is None:
        return None
    delta, p, d = best
    return apply_insertion(tour, pickup, dropoff, p, d), delta


def strip_repositions(tour: Tour) -> Tour:
    if not any(s.kind == REPOSITION for s in tour.stops):
        return tour
    return tour.replace([s for s in tour.stops if s.kind != REPOSITION])


def _path_length(points: list[Point]) -> float:
    return sum(math.hypot(a[0] - b[0], a[1] - b[1]) for a, b in zip(points[:-1], points[1:]))


def build_delivery_tour(anchor_pos: Point, anchor_time: float, dropoffs: Sequence[Stop],
                        speed_km_min: float, onboard: Iterable[int] = ()) -> Tour:
    """Open Hamiltonian path from the anchor through all dropoff stops.

    Nearest-neighbor construction followed by 2-opt; the result is never
    longer than the initial construction.
    """
    remaining = list(dropoffs)
    order: list[Stop] = []
    cur = anchor_pos
    while remaining:
        best_i = min(range(len(remaining)),
                     key=lambda i: (math.hypot(remaining[i].location[0] - cur[0],
                                               remaining[i].location[1] - cur[1]),
                                    remaining[i].request_id if remaining[i].request_id is not None else -1))
        nxt = remaining.pop(best_i)
        order.append(nxt)
        cur = nxt.location
    tour = Tour(anchor_pos, anchor_time, order, onboard)
    return two_opt(tour, q=max(len(order) + len(tour.onboard), 1), speed_km_min=speed_km_min,
                   allow_unpaired_dropoffs=True)


def _precedence_ok(stops: Sequence[Stop], onboard: frozenset) -> bool:
    picked = set()
    for s in stops:
        if s.kind == PICKUP:
            picked.add(s.request_id)
        elif s.kind == DROPOFF and s.request_id not in onboard:
            if s.request_id not in picked:
                return False
    return True


def _capacity_ok(stops: Sequence[Stop], base: int, q: int) -> bool:
    occ = base
    for s in stops:
        if s.kind == PICKUP:
            occ += 1
            if occ > q:
                return False
        elif s.kind == DROPOFF:
            occ -= 1
    return True


def two_opt(tour: Tour, q: int, speed_km_min: float,
            allow_unpaired_dropoffs: bool = False) -> Tour:
    """Precedence- and capacity-preserving 2-opt on the open path.

    Reverses stop segments while the total travel time strictly decreases;
    terminates at a local optimum. The returned tour is never longer.
    """
    stops = list(tour.stops)
    n = len(stops)
    if n < 3:
        return tour
    base = len(tour.onboard)
    pts = [tour.anchor_pos] + [s.location for s in stops]
    has_pairs = any(s.kind in (PICKUP, DROPOFF) for s in stops)
    improved = True
    guard = 0
    while improved and guard < 200:
        improved = False
        guard += 1
        best_gain = 1e-9
        best_move = None
        for i in range(n - 1):
            for j in range(i + 2, n + 1):
                # reverse stops[i:j]; boundary legs (i-1 -> i) and (j-1 -> j) change
                a, b = pts[i], pts[i + 1]
                c = pts[j]
                e = pts[j + 1] if j < n else None
                old = math.hypot(b[0] - a[0], b[1] - a[1])
                new = math.hypot(c[0] - a[0], c[1] - a[1])
                if e is not None:
                    old += math.hypot(e[0] - c[0], e[1] - c[1])
                    new += math.hypot(e[0] - b[0], e[1] - b[1])
                gain = old - new
                if gain > best_gain:
                    cand = stops[:i] + stops[i:j][::-1] + stops[j:]
                    if has_pairs and not _precedence_ok(cand, tour.onboard):
                        continue
                    if not _capacity_ok(cand, base, q):
                        continue
                    best_gain = gain
                    best_move = (i, j)
        if best_move is not None:
            i, j = best_move
            stops[i:j] = stops[i:j][::-1]
            pts = [tour.anchor_pos] + [s.location for s in stops]
            improved = True
    out = tour.replace(stops)
    validate(out, q, allow_unpaired_dropoffs=allow_unpaired_dropoffs)
    return out


def reoptimize_insert(tour: Tour, pickup: Stop, dropoff: Stop, q: int,
                      speed_km_min: float, gamma: float = 1.0,
                      beta: float = 0.0) -> Optional[Tour]:
    """Tour update for a newly committed request.

    With passengers onboard only insertion is allowed (their precedence is
    fixed). An empty vehicle may instead rebuild its delivery backbone over
    all undelivered dropoffs and re-insert the pickups one by one; the
    candidate with the lower weighted cost wins.
    """
    candidates = []
    got = evaluate_insertion_by_cost(tour, pickup.location, dropoff.location, q,
                                     speed_km_min, gamma, beta, pickup.request_time,
                                     pickup.ready_time)
    if got is not None:
        _, _, p, d = got
        candidates.append(apply_insertion(tour, pickup, dropoff, p, d))
    if not tour.onboard and tour.stops:
        rebuilt = _rebuild(tour, pickup, dropoff, q, speed_km_min)
        if rebuilt is not None:
            candidates.append(rebuilt)
    if not candidates:
        return None
    return min(candidates,
               key=lambda t: tour_cost(t, speed_km_min, gamma, beta))


def _rebuild(tour: Tour, pickup: Stop, dropoff: Stop, q: int,
             speed_km_min: float) -> Optional[Tour]:
    pairs: list[tuple[Stop, Stop]] = []
    by_req: dict[int, dict[str, Stop]] = {}
    for s in tour.stops:
        if s.kind in (PICKUP, DROPOFF):
            by_req.setdefault(s.request_id, {})[s.kind] = s
    for rid in sorted(by_req):
        entry = by_req[rid]
        if PICKUP not in entry or DROPOFF not in entry:
            return None      # partially committed request: insertion only
        pairs.append((entry[PICKUP], entry[DROPOFF]))
    pairs.append((pickup, dropoff))
    backbone = build_delivery_tour(tour.anchor_pos, tour.anchor_time,
                                   [d for _, d in pairs], speed_km_min)
    seq = list(backbone.stops)
    for p_stop, d_stop in pairs:
        # the dropoff is already placed: cheapest pickup slot at or before it
        d_idx = seq.index(d_stop)
        pts = [tour.anchor_pos] + [s.location for s in seq]
        best_slot, best_delta = None, math.inf
        for slot in range(d_idx + 1):
            a, u = pts[slot], p_stop.location
            delta = math.hypot(u[0] - a[0], u[1] - a[1])
            if slot < len(seq):
                b = pts[slot + 1]
                delta += (math.hypot(b[0] - u[0], b[1] - u[1])
                          - math.hypot(b[0] - a[0], b[1] - a[1]))
            if delta < best_delta - 1e-12:
                best_delta, best_slot = delta, slot
        seq.insert(best_slot, p_stop)
    cand_tour = tour.replace(seq)
    try:
        validate(cand_tour, q)
    except TourError:
        return None
    return cand_tour
