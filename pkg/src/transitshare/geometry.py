"""Service plane, zones, travel-time metric and the overlaid transit network.

Distances are Euclidean kilometres on a planar service rectangle; times are
minutes. The transit network supports two timing views: an expected view used
for planning (half-headway waits) and a scheduled view used by the simulation
(explicit timetable departures).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

logger = logging.getLogger(__name__)


class Point(NamedTuple):
    x: float
    y: float


def distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Zone:
    """Axis-aligned rectangular zone. Bounds are (xmin, ymin, xmax, ymax)."""

    id: int
    bounds: tuple[float, float, float, float]

    @property
    def center(self) -> Point:
        x0, y0, x1, y1 = self.bounds
        return Point((x0 + x1) / 2.0, (y0 + y1) / 2.0)

    def contains(self, p: Point) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1


class ZoneGrid:
    """Regular nx-by-ny partition of the service rectangle.

    Zone ids are row-major starting at the (xmin, ymin) corner. Interior
    boundaries are resolved to the lower-index cell so that the partition
    is exact (no overlap, full cover).
    """

    def __init__(self, rect: tuple[float, float, float, float], nx: int, ny: int):
        x0, y0, x1, y1 = rect
        if not (x1 > x0 and y1 > y0):
            raise GeometryError(f"degenerate service rectangle {rect}")
        if nx < 1 or ny < 1:
            raise GeometryError("zone grid needs nx, ny >= 1")
        self.rect = rect
        self.nx = nx
        self.ny = ny
        self._dx = (x1 - x0) / nx
        self._dy = (y1 - y0) / ny
        self.zones = []
        for j in range(ny):
            for i in range(nx):
                bounds = (x0 + i * self._dx, y0 + j * self._dy,
                          x0 + (i + 1) * self._dx, y0 + (j + 1) * self._dy)
                self.zones.append(Zone(id=j * nx + i, bounds=bounds))

    def __len__(self) -> int:
        return len(self.zones)

    def __iter__(self):
        return iter(self.zones)

    def zone_of(self, p: Point) -> int:
        x0, y0, x1, y1 = self.rect
        if not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
            raise GeometryError(f"point {p} outside service rectangle {self.rect}")
        i = min(int((p[0] - x0) / self._dx), self.nx - 1)
        j = min(int((p[1] - y0) / self._dy), self.ny - 1)
        return j * self.nx + i

    def centers(self) -> list[Point]:
        return [z.center for z in self.zones]


class TravelTimeModel:
    """Mode speeds over the Euclidean plane, in minutes.

    An optional zone-to-zone matrix (minutes) can override the Euclidean
    metric for zone-level queries on loaded networks.
    """

    MODES = ("vehicle", "walk", "train")

    def __init__(self, vehicle_kmh: float, walk_kmh: float, train_kmh: float,
                 zone_matrix: Optional[Sequence[Sequence[float]]] = None):
        speeds = {"vehicle": vehicle_kmh, "walk": walk_kmh, "train": train_kmh}
        for mode, kmh in speeds.items():
            if not (kmh > 0 and math.isfinite(kmh)):
                raise GeometryError(f"{mode} speed must be positive, got {kmh}")
        # stored as km / minute
        self._speed = {mode: kmh / 60.0 for mode, kmh in speeds.items()}
        self.zone_matrix = None
        if zone_matrix is not None:
            self.zone_matrix = [[float(v) for v in row] for row in zone_matrix]

    def speed_km_min(self, mode: str) -> float:
        try:
            return self._speed[mode]
        except KeyError:
            raise GeometryError(f"unknown travel mode {mode!r}") from None

    def minutes(self, a: Point, b: Point, mode: str = "vehicle") -> float:
        return distance(a, b) / self.speed_km_min(mode)

    def zone_minutes(self, i: int, j: int, centers: Sequence[Point]) -> float:
        if self.zone_matrix is not None:
            return self.zone_matrix[i][j]
        return self.minutes(centers[i], centers[j], "vehicle")


def travel_time(a: Point, b: Point, mode: str, model: TravelTimeModel) -> float:
    """Minutes to travel a->b in the given mode."""
    return model.minutes(a, b, mode)


@dataclass(frozen=True)
class TransitStation:
    id: int
    location: Point
    lines: tuple[str, ...]


@dataclass(frozen=True)
class TransitLine:
    """One transit line, served in both directions.

    Each direction departs its own terminal at offset + n * headway; dwell
    time at intermediate stations is zero, so the departure time at station
    k equals the terminal departure plus the cumulative run time to k.
    """

    id: str
    station_ids: tuple[int, ...]
    headway_min: float
    offset_min: float = 0.0
    speed_kmh: float = 80.0

    def __post_init__(self):
        if self.headway_min <= 0:
            raise GeometryError(f"line {self.id}: headway must be > 0")
        if len(self.station_ids) < 2:
            raise GeometryError(f"line {self.id}: needs at least 2 stations")


class TransitLeg(NamedTuple):
    line_id: str
    direction: int          # +1 along station order, -1 reverse
    from_station: int
    to_station: int
    ride_min: float


@dataclass(frozen=True)
class TransitItinerary:
    """Planned in-network path: boarding legs plus expected timing."""

    legs: tuple[TransitLeg, ...]
    expected_wait: float     # sum of half-headways, one per boarding
    in_vehicle: float

    @property
    def planned_total(self) -> float:
        return self.expected_wait + self.in_vehicle

    @property
    def boardings(self) -> int:
        return len(self.legs)


class NoTransitPath(Exception):
    """Entry and exit stations are not connected within the transfer budget."""


class TransitNetwork:
    """Stations and lines with planned costs and scheduled departures.

    Immutable after construction. In-network transfers between lines are
    allowed at shared stations, at most one per itinerary; each boarding
    pays its own expected wait of half that line's headway.
    """

    def __init__(self, stations: Sequence[TransitStation], lines: Sequence[TransitLine]):
        self.stations = list(stations)
        self.lines = {ln.id: ln for ln in lines}
        by_id = {s.id: s for s in self.stations}
        if len(by_id) != len(self.stations):
            raise GeometryError("duplicate station ids")
        self._station_by_id = by_id
        for ln in lines:
            for sid in ln.station_ids:
                if sid not in by_id:
                    raise GeometryError(f"line {ln.id} references unknown station {sid}")
        for s in self.stations:
            if not s.lines:
                raise GeometryError(f"station {s.id} belongs to no line")
        # cumulative run time from the direction=+1 terminal, per line
        self._cum: dict[str, list[float]] = {}
        for ln in lines:
            cum = [0.0]
            for a, b in zip(ln.station_ids[:-1], ln.station_ids[1:]):
                leg_km = distance(by_id[a].location, by_id[b].location)
                cum.append(cum[-1] + leg_km / (ln.speed_kmh / 60.0))
            self._cum[ln.id] = cum
        self._itinerary_cache: dict[tuple[int, int], Optional[TransitItinerary]] = {}

    def __len__(self) -> int:
        return len(self.stations)

    def station(self, sid: int) -> TransitStation:
        return self._station_by_id[sid]

    # -- station search ----------------------------------------------------

    def k_nearest(self, p: Point, k: int, model: TravelTimeModel) -> list[TransitStation]:
        """The k stations with the smallest walk time from p, ascending.

        Ties break by ascending station id. If the network has fewer than k
        stations, all of them are returned (short result is logged).
        """
        if k < 1:
            raise GeometryError("k must be >= 1")
        ranked = sorted(self.stations,
                        key=lambda s: (model.minutes(p, s.location, "walk"), s.id))
        if len(ranked) < k:
            logger.warning("k_nearest: only %d stations available (k=%d)", len(ranked), k)
            return ranked
        return ranked[:k]

    # -- planned (expected) timing ------------------------------------------

    def _station_pos(self, line: TransitLine, sid: int) -> int:
        return line.station_ids.index(sid)

    def _ride_minutes(self, line_id: str, a: int, b: int) -> float:
        ln = self.lines[line_id]
        cum = self._cum[line_id]
        ia, ib = self._station_pos(ln, a), self._station_pos(ln, b)
        return abs(cum[ib] - cum[ia])

    def planned_cost(self, entry: int, exit: int) -> TransitItinerary:
        """Cheapest planned itinerary entry->exit (direct or one transfer).

        Expected wait is half the headway of each boarded line. Raises
        NoTransitPath when no itinerary exists within one transfer.
        """
        key = (entry, exit)
        if key in self._itinerary_cache:
            cached = self._itinerary_cache[key]
            if cached is None:
                raise NoTransitPath(f"no transit path {entry}->{exit}")
            return cached
        itin = self._compute_itinerary(entry, exit)
        self._itinerary_cache[key] = itin
        if itin is None:
            raise NoTransitPath(f"no transit path {entry}->{exit}")
        return itin

    def _compute_itinerary(self, entry: int, exit: int) -> Optional[TransitItinerary]:
        if entry == exit:
            return TransitItinerary(legs=(), expected_wait=0.0, in_vehicle=0.0)
        entry_lines = self._station_by_id[entry].lines
        exit_lines = self._station_by_id[exit].lines
        best: Optional[TransitItinerary] = None
        # direct rides
        for lid in entry_lines:
            if lid not in exit_lines:
                continue
            ln = self.lines[lid]
            ride = self._ride_minutes(lid, entry, exit)
            direction = self._direction(ln, entry, exit)
            cand = TransitItinerary(
                legs=(TransitLeg(lid, direction, entry, exit, ride),),
                expected_wait=ln.headway_min / 2.0, in_vehicle=ride)
            if best is None or cand.planned_total < best.planned_total:
                best = cand
        # one transfer at a shared station
        for lid1 in entry_lines:
            ln1 = self.lines[lid1]
            for lid2 in exit_lines:
                if lid2 == lid1:
                    continue
                ln2 = self.lines[lid2]
                shared = set(ln1.station_ids) & set(ln2.station_ids)
                for mid in sorted(shared):
                    if mid == entry or mid == exit:
                        continue
                    ride1 = self._ride_minutes(lid1, entry, mid)
                    ride2 = self._ride_minutes(lid2, mid, exit)
                    cand = TransitItinerary(
                        legs=(TransitLeg(lid1, self._direction(ln1, entry, mid), entry, mid, ride1),
                              TransitLeg(lid2, self._direction(ln2, mid, exit), mid, exit, ride2)),
                        expected_wait=ln1.headway_min / 2.0 + ln2.headway_min / 2.0,
                        in_vehicle=ride1 + ride2)
                    if best is None or cand.planned_total < best.planned_total:
                        best = cand
        return best

    @staticmethod
    def _direction(line: TransitLine, a: int, b: int) -> int:
        return 1 if line.station_ids.index(b) > line.station_ids.index(a) else -1

    # -- scheduled timing ----------------------------------------------------

    def next_departure(self, station: int, line_id: str, direction: int, t: float) -> float:
        """Smallest scheduled departure >= t at the station, given direction.

        The direction's terminal departs at offset + n*headway, n >= 0; the
        departure at an intermediate station is shifted by the upstream run
        time. A departure exactly at t boards the current run.
        """
        ln = self.lines[line_id]
        cum = self._cum[line_id]
        pos = self._station_pos(ln, station)
        if direction == 1:
            shift = cum[pos]
        else:
            shift = cum[-1] - cum[pos]
        first = ln.offset_min + shift
        if t <= first:
            return first
        n = math.ceil((t - first) / ln.headway_min - 1e-12)
        return first + n * ln.headway_min

    def ride(self, itinerary: TransitItinerary, t_ready: float) -> tuple[list[float], float]:
        """Play the itinerary on the timetable from the time the rider is ready.

        Returns (board time per leg, final alight time).
        """
        t = t_ready
        boards = []
        for leg in itinerary.legs:
            dep = self.next_departure(leg.from_station, leg.line_id, leg.direction, t)
            boards.append(dep)
            t = dep + leg.ride_min
        return boards, t
