"""Stochastic request stream: Poisson arrivals with uniform endpoints.

Requests can also be replayed from fixed CSV lists so that experiments are
reproducible across machines.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Point, ZoneGrid

PRIMARY = "primary"
RTR_FOLLOWUP = "rtr_followup"


@dataclass
class Request:
    id: int
    origin: Point
    destination: Point
    arrival_time: float                 # clock minutes
    leg_role: str = PRIMARY
    parent_id: Optional[int] = None

    def __post_init__(self):
        if self.origin == self.destination:
            raise ValueError(f"request {self.id}: origin equals destination")
        if self.leg_role == RTR_FOLLOWUP and self.parent_id is None:
            raise ValueError(f"request {self.id}: follow-up leg needs a parent request")


@dataclass
class DemandSpec:
    lam_per_hour: float
    horizon_min: float
    rect: tuple[float, float, float, float]
    seed: int = 0
    # optional per-zone origin/destination weights (row-major zone ids)
    zone_weights: Optional[Sequence[float]] = None
    zone_grid: Optional[ZoneGrid] = None

    def __post_init__(self):
        if self.lam_per_hour <= 0:
            raise ValueError("arrival rate must be > 0")
        if self.horizon_min < 0:
            raise ValueError("horizon must be >= 0")


def _draw_point(rng: np.random.Generator, spec: DemandSpec) -> Point:
    if spec.zone_weights is not None:
        w = np.asarray(spec.zone_weights, dtype=float)
        zid = int(rng.choice(len(w), p=w / w.sum()))
        x0, y0, x1, y1 = spec.zone_grid.zones[zid].bounds
    else:
        x0, y0, x1, y1 = spec.rect
    return Point(float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))


def generate(spec: DemandSpec) -> list[Request]:
    """Time-ordered request list: exponential inter-arrivals, i.i.d. endpoints.

    The same spec (including seed) always yields the identical list.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    mean_gap = 60.0 / spec.lam_per_hour
    out: list[Request] = []
    t = 0.0
    rid = 0
    while True:
        t += float(rng.exponential(mean_gap))
        if t >= spec.horizon_min:
            break
        origin = _draw_point(rng, spec)
        dest = _draw_point(rng, spec)
        while dest == origin:
            dest = _draw_point(rng, spec)
        out.append(Request(id=rid, origin=origin, destination=dest, arrival_time=t))
        rid += 1
    return out


def zone_arrival_rates(requests: Sequence[Request], zones: ZoneGrid,
                       window: tuple[float, float]) -> np.ndarray:
    """Per-zone origin rates (customers/minute) over a half-open window [t0, t1)."""
    t0, t1 = window
    if not t1 > t0:
        raise ValueError("window length must be > 0")
    counts = np.zeros(len(zones), dtype=float)
    for r in requests:
        if t0 <= r.arrival_time < t1:
            counts[zones.zone_of(r.origin)] += 1
    return counts / (t1 - t0)


CSV_HEADER = ["id", "ox", "oy", "dx", "dy", "arrival_min"]


def write_requests_csv(requests: Sequence[Request], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for r in requests:
            w.writerow([r.id, repr(r.origin.x), repr(r.origin.y),
                        repr(r.destination.x), repr(r.destination.y),
                        repr(r.arrival_time)])


def read_requests_csv(path) -> list[Request]:
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(CSV_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing request columns {sorted(missing)}")
        for row in reader:
            out.append(Request(id=int(row["id"]),
                               origin=Point(float(row["ox"]), float(row["oy"])),
                               destination=Point(float(row["dx"]), float(row["dy"])),
                               arrival_time=float(row["arrival_min"])))
    out.sort(key=lambda r: (r.arrival_time, r.id))
    return out
