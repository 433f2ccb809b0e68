"""Deterministic discrete-event simulation of the integrated fleet.

Three event kinds drive the run: request arrivals trigger dispatch, transit
exits spawn the deferred second leg of rideshare-transit-rideshare trips,
and fixed-interval epochs trigger learning updates and idle-vehicle
relocation. After the arrival horizon the clock advances through the
remaining tours until every customer is at their destination.
"""

from __future__ import annotations

import heapq
import logging
import math
import time as _time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import dispatch as dsp
from . import relocation as rel
from .demand import PRIMARY, RTR_FOLLOWUP, Request
from .estimation import ZoneState
from .geometry import Point, TransitNetwork, TravelTimeModel, ZoneGrid
from .queueing import RhoTable
from .tours import (DROPOFF, PICKUP, REPOSITION, Stop, Tour, reoptimize_insert,
                    strip_repositions)

logger = logging.getLogger(__name__)

AVAILABLE = "available"
SERVING = "serving"
REPOSITIONING = "repositioning"

_EV_REQUEST = 0
_EV_STATION_EXIT = 1
_EV_EPOCH = 2

_EPS = 1e-9


class SimulationError(RuntimeError):
    pass


@dataclass
class SimConfig:
    fleet_size: int = 40
    capacity: int = 4
    relocation_interval_min: float = 10.0
    warmup_min: float = 10.0
    relocation_policy: str = rel.NONMYOPIC
    theta: float = 0.2
    eta: float = 0.95
    queue_b: int = 0
    zone_cap: Optional[int] = None
    en_route_switching: bool = True
    adaptive_mu: bool = True
    dynamic_centroid: bool = True
    mu_skip_empty_epochs: bool = False
    transit_enabled: bool = True
    seed: int = 1
    mu0: Optional[float] = None
    milp_gap: float = 1e-4         # epoch solves mirror a stock solver's default
    milp_node_limit: int = 500
    collect_events: bool = True
    dispatch: dsp.DispatchConfig = field(default_factory=dsp.DispatchConfig)

    def __post_init__(self):
        if self.relocation_interval_min <= 0:
            raise SimulationError("relocation interval must be > 0")
        if self.warmup_min < 0:
            raise SimulationError("warm-up must be >= 0")
        if self.relocation_policy not in rel.POLICIES:
            raise SimulationError(f"unknown relocation policy {self.relocation_policy!r}")
        if self.fleet_size < 1:
            raise SimulationError("fleet may not be empty")
        if self.capacity < 1:
            raise SimulationError("vehicle capacity must be >= 1")


class Vehicle:
    __slots__ = ("id", "position", "clock", "status", "capacity", "tour",
                 "travel_min", "reloc_travel_min")

    def __init__(self, vid: int, position: Point, capacity: int):
        self.id = vid
        self.position = position
        self.clock = 0.0
        self.status = AVAILABLE
        self.capacity = capacity
        self.tour = Tour(position, 0.0)
        self.travel_min = 0.0
        self.reloc_travel_min = 0.0

    def reanchor(self) -> None:
        self.tour = Tour(self.position, self.clock, self.tour.stops, self.tour.onboard)


@dataclass
class Journey:
    """One customer, arrival to final destination across all legs."""

    request: Request
    option: str = ""
    wait_min: float = 0.0
    completed_at: Optional[float] = None
    dropped_at: Optional[Point] = None

    @property
    def journey_min(self) -> float:
        return self.completed_at - self.request.arrival_time


@dataclass
class MetricsReport:
    wt_mean: float
    wt_max: float
    jt_mean: float
    vtl_mean: float
    deadhead_mean: float
    shares: dict[str, float]
    customers: int
    requests_dispatched: int
    relocation_moves: int
    fallback_epochs: int
    final_clock: float
    wall_seconds: float
    epoch_rows: list = field(default_factory=list)
    relocation_rows: list = field(default_factory=list)
    decision_rows: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def metrics_row(self, config_hash: str) -> dict:
        row = {"config_hash": config_hash,
               "WT_mean": self.wt_mean, "WT_max": self.wt_max,
               "JT_mean": self.jt_mean, "VTL_mean": self.vtl_mean}
        for opt in ("R", "WTR", "RTW", "RTR"):
            row[f"share_{opt}"] = self.shares.get(opt, 0.0)
        row["sim_wall_seconds"] = self.wall_seconds
        return row


class Simulation:
    """Single-threaded deterministic event loop over a scenario."""

    def __init__(self, scenario, config: SimConfig):
        self.scenario = scenario
        self.config = config
        self.metric: TravelTimeModel = scenario.metric
        self.zones: ZoneGrid = scenario.zones
        self.network: Optional[TransitNetwork] = scenario.network if config.transit_enabled else None
        self.speed = self.metric.speed_km_min("vehicle")
        self.requests = scenario.requests(config.seed)
        self._validate_inputs()

        mu0 = config.mu0
        if mu0 is None:
            direct = [self.metric.minutes(r.origin, r.destination, "vehicle")
                      for r in self.requests]
            mu0 = 1.0 / (sum(direct) / len(direct)) if direct else 0.05
        self.zone_state = ZoneState(self.zones, config.relocation_interval_min, mu0,
                                    adaptive_mu=config.adaptive_mu,
                                    dynamic_centroid=config.dynamic_centroid,
                                    mu_skip_empty_epochs=config.mu_skip_empty_epochs)
        cap = config.zone_cap if config.zone_cap is not None else config.fleet_size
        self.rho_table = RhoTable(config.eta, config.queue_b,
                                  m_max=max(cap, config.fleet_size, 1))
        self.vehicles = [Vehicle(i, p, config.capacity)
                         for i, p in enumerate(scenario.fleet_positions(config.fleet_size))]
        self._policy_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0x5EED)))

        self.clock = 0.0
        self.journeys: dict[int, Journey] = {}
        self._leg_info: dict[int, dict] = {}       # active rideshare leg per request id
        self._pickup_info: dict[int, tuple[float, Point]] = {}
        self._next_request_id = (max((r.id for r in self.requests), default=-1) + 1)
        self.events_log: list[tuple] = []
        self.epoch_rows: list[dict] = []
        self.relocation_rows: list[dict] = []
        self.decision_rows: list[dict] = []
        self.fallback_epochs = 0
        self.relocation_moves = 0

    # -- setup -----------------------------------------------------------------

    def _validate_inputs(self):
        if not self.requests and self.scenario.demand_source == "generated":
            logger.info("scenario generates no requests over the horizon")
        x0, y0, x1, y1 = self.zones.rect
        for r in self.requests:
            for p in (r.origin, r.destination):
                if not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
                    raise SimulationError(f"request {r.id} endpoint {p} outside service area")

    def _log(self, t: float, kind: str, subject, detail: str = ""):
        if self.config.collect_events:
            self.events_log.append((round(t, 9), kind, subject, detail))

    # -- vehicle state advance ---------------------------------------------------

    def advance_vehicles(self, to: float) -> None:
        for v in self.vehicles:
            self._advance_vehicle(v, to)

    def _advance_vehicle(self, v: Vehicle, to: float) -> None:
        while v.tour.stops:
            stop = v.tour.stops[0]
            leg = self.metric.minutes(v.position, stop.location, "vehicle")
            arrive = v.clock + leg
            if arrive > to + _EPS:
                if leg > 0:
                    frac = (to - v.clock) / leg
                    if frac > 0:
                        v.position = Point(v.position[0] + frac * (stop.location[0] - v.position[0]),
                                           v.position[1] + frac * (stop.location[1] - v.position[1]))
                        moved = to - v.clock
                        v.travel_min += moved
                        if v.status == REPOSITIONING:
                            v.reloc_travel_min += moved
                v.clock = to
                v.reanchor()
                return
            service = arrive
            if stop.kind == PICKUP and stop.ready_time > arrive:
                service = stop.ready_time
            if service > to + _EPS:
                # arrived, dwelling for the passenger past the advance horizon
                v.travel_min += leg
                if v.status == REPOSITIONING:
                    v.reloc_travel_min += leg
                v.position = stop.location
                v.clock = to
                v.reanchor()
                return
            v.travel_min += leg
            if v.status == REPOSITIONING:
                v.reloc_travel_min += leg
            v.position = stop.location
            v.clock = service
            onboard = set(v.tour.onboard)
            if stop.kind == PICKUP:
                onboard.add(stop.request_id)
            elif stop.kind == DROPOFF:
                onboard.discard(stop.request_id)
            v.tour = Tour(v.position, v.clock, v.tour.stops[1:], onboard)
            self._execute_stop(v, stop, arrive, service)
        if math.isfinite(to) and v.clock < to:
            v.clock = to
            v.reanchor()
        if not v.tour.stops and not v.tour.onboard and v.status == SERVING:
            v.status = AVAILABLE

    def _execute_stop(self, v: Vehicle, stop: Stop, arrive: float, service: float) -> None:
        if stop.kind == REPOSITION:
            v.status = AVAILABLE
            self._log(service, "reposition_done", v.id, f"{stop.location}")
            return
        rid = stop.request_id
        if stop.kind == PICKUP:
            wait = max(service - stop.ready_time, 0.0)
            jid = self._journey_of(rid)
            self.journeys[jid].wait_min += wait
            self._pickup_info[rid] = (service, stop.location)
            self._log(service, "pickup", rid, f"veh={v.id} wait={wait:.3f}")
            return
        # dropoff
        pickup_time, pickup_loc = self._pickup_info.pop(rid)
        in_vehicle = service - pickup_time
        self.zone_state.record_service(self.zones.zone_of(pickup_loc), in_vehicle)
        self._log(service, "dropoff", rid, f"veh={v.id}")
        leg = self._leg_info.pop(rid)
        jid = self._journey_of(rid)
        journey = self.journeys[jid]
        if leg["role"] == "direct":
            journey.completed_at = service
            journey.dropped_at = stop.location
        else:
            self._transit_onward(journey, leg, stop.location, service)

    def _transit_onward(self, journey: Journey, leg: dict, at: Point, t_ready: float) -> None:
        """Passenger dropped at the entry station: ride the timetable onward."""
        itinerary = leg["itinerary"]
        boards, alight = self.network.ride(itinerary, t_ready)
        for b, leg_ in zip(boards, itinerary.legs):
            self._log(b, "board", journey.request.id, f"line={leg_.line_id}")
        exit_station = self.network.station(leg["exit_station"])
        self._log(alight, "alight", journey.request.id, f"station={exit_station.id}")
        if leg["mode"] == "walk_out":
            walk = self.metric.minutes(exit_station.location, journey.request.destination, "walk")
            journey.completed_at = alight + walk
            journey.dropped_at = journey.request.destination
            self._log(journey.completed_at, "walk_done", journey.request.id, "")
        else:
            dest = journey.request.destination
            if exit_station.location == dest:
                journey.completed_at = alight
                journey.dropped_at = dest
                return
            self._push_event(alight, _EV_STATION_EXIT, self._next_seq(),
                             ("rtr_exit", journey.request.id, exit_station.location, dest))

    # -- dispatch ----------------------------------------------------------------

    def candidate_fleet(self) -> list[Vehicle]:
        cands = [v for v in self.vehicles
                 if v.status in (AVAILABLE, SERVING)
                 or (self.config.en_route_switching and v.status == REPOSITIONING)]
        if not cands:
            raise SimulationError(
                "no dispatchable vehicle: en-route switching is off and the whole "
                "fleet is repositioning")
        return cands

    def _idle_by_zone(self) -> list[int]:
        counts = [0] * len(self.zones)
        for v in self.vehicles:
            if v.status == AVAILABLE:
                counts[self.zones.zone_of(v.position)] += 1
        return counts

    def _journey_of(self, rid: int) -> int:
        j = self.journeys.get(rid)
        if j is not None and j.request.leg_role == PRIMARY:
            return rid
        return self.journeys[rid].request.parent_id if j else rid

    def _dispatch(self, request: Request) -> None:
        allowed = dsp.OPTIONS
        if request.leg_role == RTR_FOLLOWUP or self.network is None:
            allowed = (dsp.R,)
        plan = dsp.plan_service(request, self.candidate_fleet(), self.config.dispatch,
                                self.metric, self.config.capacity, network=self.network,
                                zone_state=self.zone_state, zones=self.zones,
                                idle_by_zone=self._idle_by_zone(),
                                allowed_options=allowed)
        plan = dsp.finalize_plan(plan, request, {v.id: v for v in self.vehicles},
                                 self.config.dispatch, self.metric, self.config.capacity,
                                 network=self.network)
        if request.leg_role == PRIMARY:
            self.journeys[request.id].option = plan.option
        veh = next(v for v in self.vehicles if v.id == plan.vehicle_id)
        if veh.status == REPOSITIONING:
            self._log(request.arrival_time, "switch", veh.id, "abandons relocation target")
        veh.tour = plan.new_tour
        veh.status = SERVING
        if plan.option in (dsp.R, dsp.WTR):
            self._leg_info[request.id] = {"role": "direct"}
        elif plan.option == dsp.RTW:
            self._leg_info[request.id] = {"role": "to_station", "mode": "walk_out",
                                          "itinerary": plan.itinerary,
                                          "exit_station": plan.exit_station}
        else:
            self._leg_info[request.id] = {"role": "to_station", "mode": "second_ride",
                                          "itinerary": plan.itinerary,
                                          "exit_station": plan.exit_station}
            self.zone_state.add_rtr_forecast(
                plan.expected_exit_time,
                self.zones.zone_of(self.network.station(plan.exit_station).location))
        self._record_decision(request, plan)
        self._log(request.arrival_time, "dispatch", request.id,
                  f"option={plan.option} veh={plan.vehicle_id}")

    def _record_decision(self, request: Request, plan) -> None:
        costs = plan.option_costs
        self.decision_rows.append({
            "request_id": request.id, "option": plan.option,
            "vehicle_id": plan.vehicle_id,
            "s1": plan.entry_station if plan.entry_station is not None else "",
            "s2": plan.exit_station if plan.exit_station is not None else "",
            "cost_R": costs.get(dsp.R, math.inf),
            "cost_RTR": costs.get(dsp.RTR, math.inf),
            "cost_RTW": costs.get(dsp.RTW, math.inf),
            "cost_WTR": costs.get(dsp.WTR, math.inf)})

    # -- relocation epoch ----------------------------------------------------------

    def _relocation_epoch(self, h: int, now: float) -> None:
        idle_before = self._idle_by_zone()
        self.zone_state.close_epoch()
        for z in range(len(self.zones)):
            c = self.zone_state.centroid(z)
            self.epoch_rows.append({
                "epoch": h, "zone": z,
                "lambda": self.zone_state.forecast_lambda(z),
                "mu": self.zone_state.smoothed_mu(z),
                "cx": c[0], "cy": c[1], "idle_count": idle_before[z]})
        policy = self.config.relocation_policy
        if now <= self.config.warmup_min + _EPS or policy == rel.WAITING:
            self._record_relocation(h, policy, math.nan)
            return
        idle = [v for v in self.vehicles if v.status == AVAILABLE]
        centroids = self.zone_state.centroids()
        orders: list[tuple[int, Point, int]] = []
        phi = math.nan
        if policy == rel.BUSIEST:
            orders = rel.busiest_zone_policy([(v.id, v.position) for v in idle],
                                             self.zone_state, centroids,
                                             self._policy_rng, self.metric)
        elif policy in (rel.MYOPIC, rel.NONMYOPIC):
            idle_ids_by_zone: list[list[int]] = [[] for _ in self.zones]
            for v in idle:
                idle_ids_by_zone[self.zones.zone_of(v.position)].append(v.id)
            counts = [len(ids) for ids in idle_ids_by_zone]
            caps = None if self.config.zone_cap is None else [self.config.zone_cap] * len(self.zones)
            instance = rel.build_instance(self.zone_state, counts, self.config.theta,
                                          self.rho_table, centroids, self.metric, now,
                                          caps=caps)
            if instance is not None and instance.lam.sum() > 0:
                if policy == rel.NONMYOPIC:
                    solution, fell_back = rel.solve_with_fallback(
                        instance, gap=self.config.milp_gap,
                        node_limit=self.config.milp_node_limit)
                    self.fallback_epochs += int(fell_back)
                else:
                    solution = rel.solve_myopic(instance, gap=self.config.milp_gap,
                                                node_limit=self.config.milp_node_limit)
                phi = solution.objective
                orders = rel.plan_moves(solution, idle_ids_by_zone, centroids)
        by_id = {v.id: v for v in self.vehicles}
        total_minutes = 0.0
        moved = 0
        for vid, target, zone in orders:
            v = by_id[vid]
            if v.position == target:
                continue
            v.tour = Tour(v.position, v.clock, [Stop(REPOSITION, target)])
            v.status = REPOSITIONING
            total_minutes += self.metric.minutes(v.position, target, "vehicle")
            moved += 1
            self._log(now, "reposition", vid, f"zone={zone}")
        self.relocation_moves += moved
        self._record_relocation(h, policy, phi, moved, total_minutes)

    def _record_relocation(self, h, policy, phi, moved=0, total_minutes=0.0):
        self.relocation_rows.append({
            "epoch": h, "policy": policy, "phi": phi,
            "moved_vehicles": moved,
            "total_reloc_minutes": total_minutes})

    # -- event loop -------------------------------------------------------------

    def _push_event(self, t, kind, seq, payload):
        heapq.heappush(self._heap, (t, kind, seq, payload))

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def run(self) -> MetricsReport:
        t0 = _time.perf_counter()
        cfg = self.config
        self._heap: list = []
        self._seq = 0
        for r in self.requests:
            self.journeys[r.id] = Journey(request=r)
            self._push_event(r.arrival_time, _EV_REQUEST, r.id, r)
        horizon = self.scenario.demand_horizon_min
        h = 1
        while h * cfg.relocation_interval_min <= horizon + _EPS:
            self._push_event(h * cfg.relocation_interval_min, _EV_EPOCH, h, h)
            h += 1

        while True:
            while self._heap:
                t, kind, seq, payload = heapq.heappop(self._heap)
                self.advance_vehicles(t)
                self.clock = max(self.clock, t)
                if kind == _EV_REQUEST:
                    request = payload
                    self._log(t, "request", request.id, request.leg_role)
                    self.zone_state.record_demand(self.zones.zone_of(request.origin),
                                                  request.origin)
                    self._dispatch(request)
                elif kind == _EV_STATION_EXIT:
                    _, primary_id, at, dest = payload
                    rid = self._next_request_id
                    self._next_request_id += 1
                    follow = Request(id=rid, origin=at, destination=dest,
                                     arrival_time=t, leg_role=RTR_FOLLOWUP,
                                     parent_id=primary_id)
                    self.journeys[rid] = Journey(request=follow)
                    self._log(t, "exit_spawn", primary_id, f"followup={rid}")
                    self.zone_state.record_demand(self.zones.zone_of(at), at)
                    self._dispatch(follow)
                else:
                    self._relocation_epoch(payload, t)
            # drain the remaining tours; dropoffs at entry stations may still
            # enqueue transit-exit events, so loop until nothing new appears
            self.advance_vehicles(math.inf)
            if not self._heap:
                break
        return self._build_report(_time.perf_counter() - t0)

    # -- reporting ----------------------------------------------------------------

    def _build_report(self, wall: float) -> MetricsReport:
        # timetable consequences are logged when they are decided, which can
        # predate slower vehicle events; emit the log in clock order
        self.events_log.sort(key=lambda e: e[0])
        primaries = [j for j in self.journeys.values() if j.request.leg_role == PRIMARY]
        for j in primaries:
            if j.completed_at is None:
                raise SimulationError(f"customer {j.request.id} never reached the destination")
            dropped = j.dropped_at
            dest = j.request.destination
            if math.hypot(dropped[0] - dest[0], dropped[1] - dest[1]) > 1e-6:
                raise SimulationError(f"customer {j.request.id} dropped at {dropped}, not {dest}")
        n = len(primaries)
        waits = [j.wait_min for j in primaries]
        jts = [j.journey_min for j in primaries]
        shares = {opt: 0.0 for opt in dsp.OPTIONS}
        for j in primaries:
            shares[j.option] = shares.get(j.option, 0.0) + 1.0
        if n:
            shares = {k: 100.0 * v / n for k, v in shares.items()}
        fleet = self.vehicles
        report = MetricsReport(
            wt_mean=(sum(waits) / n if n else 0.0),
            wt_max=(max(waits) if waits else 0.0),
            jt_mean=(sum(jts) / n if n else 0.0),
            vtl_mean=sum(v.travel_min for v in fleet) / len(fleet),
            deadhead_mean=sum(v.reloc_travel_min for v in fleet) / len(fleet),
            shares=shares,
            customers=n,
            requests_dispatched=len(self.decision_rows),
            relocation_moves=self.relocation_moves,
            fallback_epochs=self.fallback_epochs,
            final_clock=max([self.clock] + [v.clock for v in fleet]
                            + [j.completed_at for j in primaries if j.completed_at is not None]),
            wall_seconds=wall,
            epoch_rows=self.epoch_rows,
            relocation_rows=self.relocation_rows,
            decision_rows=self.decision_rows,
            events=self.events_log)
        return report


def run(scenario, config: SimConfig) -> MetricsReport:
    return Simulation(scenario, config).run()
