"""Online learning of zone demand rates, service rates and gravity centroids.

All quantities are learned per relocation epoch and smoothed with a 3-step
moving average (fewer steps while the history is still filling up). Demand
points observed inside a zone can shift that zone's relocation centroid;
both the service-rate learning and the centroid adjustment can be switched
off for ablation runs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .geometry import Point, ZoneGrid

HISTORY = 3


@dataclass
class _ZoneRecord:
    lam_history: deque = field(default_factory=lambda: deque(maxlen=HISTORY))
    mu_history: deque = field(default_factory=lambda: deque(maxlen=HISTORY))
    centroid_history: deque = field(default_factory=lambda: deque(maxlen=HISTORY))
    # accumulators for the epoch currently in progress
    demand_count: int = 0
    pickup_points: list = field(default_factory=list)
    served_minutes: list = field(default_factory=list)


def _mean_point(points: Sequence[Point]) -> Point:
    n = len(points)
    return Point(sum(p[0] for p in points) / n, sum(p[1] for p in points) / n)


class ZoneState:
    """Per-zone learned state shared by relocation and dispatch."""

    def __init__(self, zones: ZoneGrid, epoch_minutes: float, mu0: float,
                 adaptive_mu: bool = True, dynamic_centroid: bool = True,
                 mu_skip_empty_epochs: bool = False):
        if epoch_minutes <= 0:
            raise ValueError("epoch length must be > 0")
        self.zones = zones
        self.epoch_minutes = epoch_minutes
        self.mu0 = mu0
        self.adaptive_mu = adaptive_mu
        self.dynamic_centroid = dynamic_centroid
        self.mu_skip_empty_epochs = mu_skip_empty_epochs
        self._records = [_ZoneRecord() for _ in zones]
        for rec in self._records:
            rec.mu_history.append(mu0)     # every zone starts at the prior rate
        # anticipated rideshare demand at transit exits: (clock minute, zone)
        self._rtr_forecast: list[tuple[float, int]] = []
        self.epoch = 0

    # -- observations during an epoch ----------------------------------------

    def record_demand(self, zone: int, point: Point) -> None:
        rec = self._records[zone]
        rec.demand_count += 1
        rec.pickup_points.append(point)

    def record_service(self, zone: int, in_vehicle_min: float) -> None:
        self._records[zone].served_minutes.append(in_vehicle_min)

    def add_rtr_forecast(self, expected_exit_time: float, zone: int) -> None:
        self._rtr_forecast.append((expected_exit_time, zone))

    # -- epoch boundary --------------------------------------------------------

    def update_mu(self, zone: int, served: Sequence[float]) -> float:
        """Fold one epoch of service observations into the zone's rate.

        The epoch-raw rate is customers served divided by their total
        in-vehicle minutes (zero for an idle epoch, which still enters the
        moving average unless configured otherwise).
        """
        rec = self._records[zone]
        total = sum(served)
        raw = (len(served) / total) if total > 0 else 0.0
        if raw > 0 or not self.mu_skip_empty_epochs:
            rec.mu_history.append(raw)
        return self.smoothed_mu(zone)

    def update_centroid(self, zone: int, pickups: Sequence[Point]) -> Point:
        """Fold one epoch of demand points into the zone's gravity centroid."""
        rec = self._records[zone]
        raw = _mean_point(pickups) if pickups else self.zones.zones[zone].center
        rec.centroid_history.append(raw)
        return self.centroid(zone)

    def close_epoch(self) -> None:
        """Push the in-progress accumulators into the per-zone histories."""
        for zid, rec in enumerate(self._records):
            rec.lam_history.append(rec.demand_count / self.epoch_minutes)
            self.update_mu(zid, rec.served_minutes)
            self.update_centroid(zid, rec.pickup_points)
            rec.demand_count = 0
            rec.pickup_points = []
            rec.served_minutes = []
        self.epoch += 1

    # -- smoothed views ---------------------------------------------------------

    def forecast_lambda(self, zone: int, now: Optional[float] = None) -> float:
        """Predicted demand rate: moving average plus anticipated transit exits.

        When a clock is given, forecast transit-exit arrivals falling in the
        next epoch window [now, now + epoch) are added at 1/epoch each.
        """
        rec = self._records[zone]
        base = sum(rec.lam_history) / len(rec.lam_history) if rec.lam_history else 0.0
        if now is None:
            return base
        horizon = now + self.epoch_minutes
        pending = sum(1 for t, z in self._rtr_forecast if z == zone and now <= t < horizon)
        return base + pending / self.epoch_minutes

    def smoothed_mu(self, zone: int) -> float:
        if not self.adaptive_mu:
            return self.mu0
        hist = self._records[zone].mu_history
        if not hist:
            return self.mu0
        return sum(hist) / len(hist)

    def centroid(self, zone: int) -> Point:
        if not self.dynamic_centroid:
            return self.zones.zones[zone].center
        hist = self._records[zone].centroid_history
        if not hist:
            return self.zones.zones[zone].center
        return _mean_point(list(hist))

    def centroids(self) -> list[Point]:
        return [self.centroid(z) for z in range(len(self.zones))]

    def smoothed_lambdas(self, now: Optional[float] = None) -> list[float]:
        return [self.forecast_lambda(z, now) for z in range(len(self.zones))]

    def raw_lambda_history(self, zone: int) -> list[float]:
        return list(self._records[zone].lam_history)
