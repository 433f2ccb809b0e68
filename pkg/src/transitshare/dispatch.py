"""Request dispatch: direct rides and transit-transfer options.

For each incoming request the planner evaluates, over the nearby candidate
vehicles, a direct ride (R), rideshare-transit-walk in either direction
(RTW, WTR) over all pairs of k-nearest entry/exit stations, and
rideshare-transit-rideshare (RTR) where only the first leg is committed and
the post-transit leg is approximated from the current fleet state. Vehicle
attractiveness is the insertion cost delta

    c(v, x) = gamma * T(v, x) + (1 - gamma) * (beta * T(v, x)^2 + sum_n Y_n)

evaluated on the tour before and after cheapest insertion of the leg.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .geometry import (NoTransitPath, Point, TransitItinerary, TransitNetwork,
                       TravelTimeModel, ZoneGrid)
from .tours import (DROPOFF, PICKUP, Stop, Tour, evaluate_insertion_by_cost,
                    reoptimize_insert, strip_repositions, tour_cost, tour_metrics)

logger = logging.getLogger(__name__)

R = "R"
RTR = "RTR"
RTW = "RTW"
WTR = "WTR"
OPTIONS = (R, RTW, WTR, RTR)     # also the tie-break preference order


class DispatchError(RuntimeError):
    pass


@dataclass
class DispatchConfig:
    gamma: float = 0.5
    beta: float = 0.0                  # per-minute look-ahead weight
    k_stations: int = 4
    n_nearby: Optional[int] = None     # None: consider the whole fleet
    walk_limit_min: float = 30.0
    transfer_cap: int = 2              # intermodal transfers per trip
    rtr_wait_cap_min: float = 30.0
    rtr_soon_min: float = 10.0         # tours ending within this count as soon-idle

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.k_stations < 1 or (self.n_nearby is not None and self.n_nearby < 1):
            raise ValueError("k_stations and n_nearby must be >= 1")


@dataclass(frozen=True)
class CandidateEval:
    option: str
    vehicle_id: Optional[int]
    entry_station: Optional[int]
    exit_station: Optional[int]
    cost: float


@dataclass
class ServicePlan:
    option: str
    cost: float
    vehicle_id: Optional[int] = None
    new_tour: Optional[Tour] = None
    pickup_stop: Optional[Stop] = None
    dropoff_stop: Optional[Stop] = None
    entry_station: Optional[int] = None
    exit_station: Optional[int] = None
    itinerary: Optional[TransitItinerary] = None
    walk_minutes: float = 0.0
    expected_leg_dropoff: Optional[float] = None
    expected_exit_time: Optional[float] = None
    option_costs: dict = field(default_factory=dict)
    candidates: list = field(default_factory=list)


def vehicle_cost(tour: Tour, speed_km_min: float, cfg: DispatchConfig) -> float:
    """Tour cost per the weighted objective above."""
    return tour_cost(tour, speed_km_min, cfg.gamma, cfg.beta)


def marginal_cost(tour: Tour, pickup: Stop, dropoff: Stop, q: int,
                  speed_km_min: float, cfg: DispatchConfig
                  ) -> Optional[float]:
    """Insertion cost delta c(v, x+leg) - c(v, x) for the best position pair.

    Positions are scored by the same weighted cost used for vehicle
    selection. A repositioning vehicle abandons its relocation target: the
    insertion happens on the tour with reposition stops removed while the
    baseline keeps them, so the recovered deadhead credits the candidate.
    """
    target = strip_repositions(tour)
    got = evaluate_insertion_by_cost(target, pickup.location, dropoff.location, q,
                                     speed_km_min, cfg.gamma, cfg.beta,
                                     pickup.request_time, pickup.ready_time)
    if got is None:
        return None
    delta_vs_target, _, _, _ = got
    if target is not tour:
        delta_vs_target += (vehicle_cost(target, speed_km_min, cfg)
                            - vehicle_cost(tour, speed_km_min, cfg))
    return delta_vs_target


def rtr_second_leg_estimate(exit_loc: Point, destination: Point,
                            fleet: Sequence, cfg: DispatchConfig,
                            metric: TravelTimeModel, speed_km_min: float,
                            zone_mu: Optional[float] = None,
                            zone_idle: int = 0) -> float:
    """Approximate cost of the deferred post-transit leg.

    The expected wait at the exit is the time for the nearest idle or
    soon-idle vehicle to reach the station; without any such vehicle it
    falls back to the zone-average wait 1/(mu*m), capped. The leg is then
    weighted like any tour of length wait + ride.
    """
    ride = metric.minutes(exit_loc, destination, "vehicle")
    waits = []
    for v in fleet:
        t_busy, _ = tour_metrics(v.tour, speed_km_min)
        if t_busy == 0.0:
            waits.append(metric.minutes(v.position, exit_loc, "vehicle"))
        elif t_busy <= cfg.rtr_soon_min:
            end = v.tour.stops[-1].location if v.tour.stops else v.position
            waits.append(t_busy + metric.minutes(end, exit_loc, "vehicle"))
    if waits:
        wait = max(min(waits), 0.0)
    elif zone_mu and zone_idle > 0:
        wait = min(1.0 / (zone_mu * zone_idle), cfg.rtr_wait_cap_min)
    else:
        wait = cfg.rtr_wait_cap_min
    leg = wait + ride
    return cfg.gamma * leg + (1.0 - cfg.gamma) * (cfg.beta * leg * leg + leg)


def _leg_scan(fleet: Sequence, pickup: Stop, dropoff: Stop, q: int,
              speed_km_min: float, cfg: DispatchConfig):
    """Best vehicle for one rideshare leg; returns (delta, vehicle) or None."""
    best = None
    for v in fleet:
        delta = marginal_cost(v.tour, pickup, dropoff, q, speed_km_min, cfg)
        if delta is None:
            continue
        if best is None or delta < best[0] - 1e-12:
            best = (delta, v)
    return best


def plan_service(request, fleet: Sequence, cfg: DispatchConfig,
                 metric: TravelTimeModel, q: int,
                 network: Optional[TransitNetwork] = None,
                 zone_state=None, zones: Optional[ZoneGrid] = None,
                 idle_by_zone: Optional[Sequence[int]] = None,
                 allowed_options: Sequence[str] = OPTIONS) -> ServicePlan:
    """Pick the minimum-cost service option and vehicle for a request.

    Candidate vehicles are the n nearest by drive time to the pickup.
    Transit options need a network; walking legs beyond the configured
    limit are discarded. Ties between options prefer fewer committed legs
    (R first, RTR last).
    """
    if not fleet:
        raise DispatchError("no candidate vehicles; fleet may not be empty")
    speed = metric.speed_km_min("vehicle")
    ranked = sorted(fleet, key=lambda v: (metric.minutes(v.position, request.origin), v.id))
    cand = ranked[: cfg.n_nearby] if cfg.n_nearby else ranked

    o, d, t_req = request.origin, request.destination, request.arrival_time
    evals: list[CandidateEval] = []
    best_by_option: dict[str, ServicePlan] = {}

    def leg_stops(pickup_loc, dropoff_loc, reference_time, ready=None):
        ready = reference_time if ready is None else ready
        return (Stop(PICKUP, pickup_loc, request.id, reference_time, ready),
                Stop(DROPOFF, dropoff_loc, request.id, reference_time, ready))

    # rideshare only
    if R in allowed_options:
        pu, do = leg_stops(o, d, t_req)
        got = _leg_scan(cand, pu, do, q, speed, cfg)
        if got is not None:
            delta, veh = got
            evals.append(CandidateEval(R, veh.id, None, None, delta))
            best_by_option[R] = ServicePlan(R, delta, vehicle_id=veh.id,
                                            pickup_stop=pu, dropoff_stop=do)

    transit_wanted = network is not None and any(
        opt in allowed_options for opt in (RTW, WTR, RTR))
    if transit_wanted and len(network) >= 1:
        entries = network.k_nearest(o, cfg.k_stations, metric)
        exits = network.k_nearest(d, cfg.k_stations, metric)

        first_leg: dict[int, Optional[tuple]] = {}
        for s1 in entries:
            pu, do = leg_stops(o, s1.location, t_req)
            first_leg[s1.id] = _leg_scan(cand, pu, do, q, speed, cfg)
        rtr_est: dict[int, float] = {}
        if RTR in allowed_options:
            for s2 in exits:
                zid = zones.zone_of(s2.location) if zones is not None else None
                rtr_est[s2.id] = rtr_second_leg_estimate(
                    s2.location, d, cand, cfg, metric, speed,
                    zone_mu=(zone_state.smoothed_mu(zid) if zone_state and zid is not None else None),
                    zone_idle=(idle_by_zone[zid] if idle_by_zone is not None and zid is not None else 0))

        pax_w = 1.0 - cfg.gamma       # transit and walk legs are passenger time only
        for s1 in entries:
            for s2 in exits:
                try:
                    itin = network.planned_cost(s1.id, s2.id)
                except NoTransitPath:
                    continue
                transit = pax_w * itin.planned_total
                if RTW in allowed_options and first_leg[s1.id] is not None:
                    walk_eg = metric.minutes(s2.location, d, "walk")
                    if walk_eg <= cfg.walk_limit_min:
                        delta, veh = first_leg[s1.id]
                        cost = delta + transit + pax_w * walk_eg
                        evals.append(CandidateEval(RTW, veh.id, s1.id, s2.id, cost))
                        cur = best_by_option.get(RTW)
                        if cur is None or cost < cur.cost - 1e-12:
                            pu, do = leg_stops(o, s1.location, t_req)
                            best_by_option[RTW] = ServicePlan(
                                RTW, cost, vehicle_id=veh.id, pickup_stop=pu,
                                dropoff_stop=do, entry_station=s1.id,
                                exit_station=s2.id, itinerary=itin, walk_minutes=walk_eg)
                if WTR in allowed_options:
                    walk_ac = metric.minutes(o, s1.location, "walk")
                    if walk_ac <= cfg.walk_limit_min:
                        # the rider is only at the exit station once the walk
                        # and scheduled ride complete; the committed second
                        # leg prices any dwell it would cause
                        _, alight = network.ride(itin, t_req + walk_ac)
                        pu, do = leg_stops(s2.location, d, alight, ready=alight)
                        got = _leg_scan(cand, pu, do, q, speed, cfg)
                        if got is not None:
                            delta, veh = got
                            cost = pax_w * walk_ac + transit + delta
                            evals.append(CandidateEval(WTR, veh.id, s1.id, s2.id, cost))
                            cur = best_by_option.get(WTR)
                            if cur is None or cost < cur.cost - 1e-12:
                                best_by_option[WTR] = ServicePlan(
                                    WTR, cost, vehicle_id=veh.id,
                                    pickup_stop=pu, dropoff_stop=do,
                                    entry_station=s1.id, exit_station=s2.id,
                                    itinerary=itin, walk_minutes=walk_ac)
                if RTR in allowed_options and first_leg[s1.id] is not None:
                    delta, veh = first_leg[s1.id]
                    cost = delta + transit + rtr_est[s2.id]
                    evals.append(CandidateEval(RTR, veh.id, s1.id, s2.id, cost))
                    cur = best_by_option.get(RTR)
                    if cur is None or cost < cur.cost - 1e-12:
                        pu, do = leg_stops(o, s1.location, t_req)
                        best_by_option[RTR] = ServicePlan(
                            RTR, cost, vehicle_id=veh.id, pickup_stop=pu,
                            dropoff_stop=do, entry_station=s1.id,
                            exit_station=s2.id, itinerary=itin)

    if not best_by_option:
        raise DispatchError(f"request {request.id}: no feasible service option")

    chosen = None
    for opt in OPTIONS:
        plan = best_by_option.get(opt)
        if plan is not None and (chosen is None or plan.cost < chosen.cost - 1e-12):
            chosen = plan
    chosen.option_costs = {opt: (best_by_option[opt].cost if opt in best_by_option else math.inf)
                           for opt in OPTIONS}
    chosen.candidates = evals
    return chosen


def finalize_plan(plan: ServicePlan, request, fleet_by_id: dict, cfg: DispatchConfig,
                  metric: TravelTimeModel, q: int,
                  network: Optional[TransitNetwork] = None) -> ServicePlan:
    """Build the committed tour (and timeline) for the winning plan.

    The committed tour is re-optimized (delivery-backbone rebuild when the
    vehicle is empty, then local search), which can only improve on the
    evaluation-time insertion. WTR resolves its timetable ride here because
    the second-leg pickup must carry the rider's station arrival time.
    """
    speed = metric.speed_km_min("vehicle")
    veh = fleet_by_id[plan.vehicle_id]
    base = strip_repositions(veh.tour)
    new_tour = reoptimize_insert(base, plan.pickup_stop, plan.dropoff_stop, q, speed,
                                 gamma=cfg.gamma, beta=cfg.beta)
    if new_tour is None:
        raise DispatchError(f"request {request.id}: committed insertion became infeasible")
    plan.new_tour = new_tour
    clock = new_tour.anchor_time
    pts = [new_tour.anchor_pos] + [s.location for s in new_tour.stops]
    for i, stop in enumerate(new_tour.stops):
        clock += metric.minutes(pts[i], pts[i + 1], "vehicle")
        if stop.kind == DROPOFF and stop.request_id == request.id:
            plan.expected_leg_dropoff = clock
            break
    if plan.option == RTR and plan.expected_leg_dropoff is not None:
        _, exit_eta = network.ride(plan.itinerary, plan.expected_leg_dropoff)
        plan.expected_exit_time = exit_eta
    return plan
