"""Scenario files: network, demand, fleet and run configuration in one JSON.

The schema is strict: unknown keys are rejected with the offending path so
that typos fail loudly before a run starts. Transit lines are either listed
station by station or generated as axis-parallel lines with regular station
spacing (shared coordinates collapse into interchange stations).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict
from importlib import resources
from pathlib import Path
from typing import Optional

from .demand import DemandSpec, generate, read_requests_csv
from .dispatch import DispatchConfig
from .engine import SimConfig
from .geometry import (Point, TransitLine, TransitNetwork, TransitStation,
                       TravelTimeModel, ZoneGrid)

BUNDLED_SCENARIO = "synthetic_grid.json"


class ScenarioError(ValueError):
    pass


def _require(section: dict, path: str, allowed: dict) -> dict:
    """Validate keys and defaults: allowed maps key -> (required, default)."""
    unknown = set(section) - set(allowed)
    if unknown:
        raise ScenarioError(f"{path}: unknown keys {sorted(unknown)}")
    out = {}
    for key, (required, default) in allowed.items():
        if key in section:
            out[key] = section[key]
        elif required:
            raise ScenarioError(f"{path}: missing required key {key!r}")
        else:
            out[key] = default
    return out


def _line_points(spec: dict, idx: int) -> tuple[str, list[Point], float, float, Optional[float]]:
    path = f"network.transit.lines[{idx}]"
    allowed = {"id": (True, None), "axis": (False, None), "at": (False, None),
               "start": (False, None), "stop": (False, None), "step": (False, None),
               "stations": (False, None), "headway_min": (False, None),
               "offset_min": (False, None), "speed_kmh": (False, None)}
    spec = _require(spec, path, allowed)
    if spec["stations"] is not None:
        pts = [Point(float(x), float(y)) for x, y in spec["stations"]]
    elif spec["axis"] in ("h", "v"):
        for key in ("at", "start", "stop", "step"):
            if spec[key] is None:
                raise ScenarioError(f"{path}: generated line needs {key!r}")
        start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        if step <= 0 or stop <= start:
            raise ScenarioError(f"{path}: need stop > start and step > 0")
        count = round((stop - start) / step)
        if abs(start + count * step - stop) > 1e-9:
            raise ScenarioError(f"{path}: span is not a multiple of step")
        coords = [start + i * step for i in range(count + 1)]
        at = float(spec["at"])
        pts = ([Point(c, at) for c in coords] if spec["axis"] == "h"
               else [Point(at, c) for c in coords])
    else:
        raise ScenarioError(f"{path}: give either 'stations' or axis/at/start/stop/step")
    if len(pts) < 2:
        raise ScenarioError(f"{path}: a line needs at least 2 stations")
    return (str(spec["id"]), pts, spec["headway_min"], spec["offset_min"], spec["speed_kmh"])


def _build_network(section: dict, speeds: dict) -> TransitNetwork:
    allowed = {"headway_min": (True, None), "offset_min": (False, 0.0),
               "lines": (True, None)}
    sec = _require(section, "network.transit", allowed)
    default_headway = float(sec["headway_min"])
    default_offset = float(sec["offset_min"])
    parsed = [_line_points(ls, i) for i, ls in enumerate(sec["lines"])]

    def key(p: Point) -> tuple:
        return (round(p[0], 9), round(p[1], 9))

    uniq = sorted({key(p) for _, pts, *_ in parsed for p in pts})
    sid = {k: i for i, k in enumerate(uniq)}
    lines_of: dict[int, list[str]] = {i: [] for i in range(len(uniq))}
    lines = []
    for line_id, pts, headway, offset, speed in parsed:
        ids = tuple(sid[key(p)] for p in pts)
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"line {line_id}: repeated station coordinates")
        for i in ids:
            lines_of[i].append(line_id)
        lines.append(TransitLine(
            id=line_id, station_ids=ids,
            headway_min=float(headway) if headway is not None else default_headway,
            offset_min=float(offset) if offset is not None else default_offset,
            speed_kmh=float(speed) if speed is not None else speeds["train"]))
    stations = [TransitStation(id=i, location=Point(*k), lines=tuple(lines_of[i]))
                for k, i in sid.items()]
    return TransitNetwork(stations, lines)


class Scenario:
    """Validated scenario ready to hand to the simulation engine."""

    def __init__(self, raw: dict, base_dir: Optional[Path] = None, source: str = "<memory>"):
        self.source = source
        self.raw = raw
        base_dir = base_dir or Path.cwd()
        top = _require(raw, "scenario", {
            "description": (False, ""), "network": (True, None),
            "demand": (True, None), "fleet": (True, None),
            "dispatch": (False, {}), "relocation": (False, {}),
            "learning": (False, {}), "engine": (False, {})})
        self.description = top["description"]

        net = _require(top["network"], "network", {
            "rect": (True, None), "zones": (True, None),
            "speeds_kmh": (True, None), "transit": (False, None)})
        rect = tuple(float(v) for v in net["rect"])
        if len(rect) != 4:
            raise ScenarioError("network.rect must be [xmin, ymin, xmax, ymax]")
        zones = _require(net["zones"], "network.zones", {"nx": (True, None), "ny": (True, None)})
        self.zones = ZoneGrid(rect, int(zones["nx"]), int(zones["ny"]))
        speeds = _require(net["speeds_kmh"], "network.speeds_kmh", {
            "vehicle": (True, None), "walk": (True, None), "train": (True, None)})
        speeds = {k: float(v) for k, v in speeds.items()}
        self.metric = TravelTimeModel(speeds["vehicle"], speeds["walk"], speeds["train"])
        self.network = _build_network(net["transit"], speeds) if net["transit"] else None

        dem = _require(top["demand"], "demand", {
            "lambda_per_hour": (True, None), "horizon_min": (True, None),
            "requests_csv": (False, None)})
        self.lambda_per_hour = float(dem["lambda_per_hour"])
        self.demand_horizon_min = float(dem["horizon_min"])
        self._requests_csv = (base_dir / dem["requests_csv"]) if dem["requests_csv"] else None
        self.demand_source = "csv" if self._requests_csv else "generated"

        fleet = _require(top["fleet"], "fleet", {
            "size": (True, None), "capacity": (True, None),
            "placement": (False, "depot"), "depot": (False, [0.0, 0.0])})
        self.fleet_size = int(fleet["size"])
        self.capacity = int(fleet["capacity"])
        if fleet["placement"] not in ("depot", "spread"):
            raise ScenarioError("fleet.placement must be 'depot' or 'spread'")
        self.placement = fleet["placement"]
        self.depot = Point(float(fleet["depot"][0]), float(fleet["depot"][1]))

        self._dispatch_raw = _require(top["dispatch"], "dispatch", {
            "gamma": (False, 0.5), "beta": (False, 0.0), "k_stations": (False, 4),
            "n_nearby": (False, None), "walk_limit_min": (False, 30.0),
            "rtr_wait_cap_min": (False, 30.0), "rtr_soon_min": (False, 10.0)})
        self._relocation_raw = _require(top["relocation"], "relocation", {
            "policy": (False, "nonmyopic"), "interval_min": (False, 10.0),
            "warmup_min": (False, 10.0), "theta": (False, 0.2),
            "eta": (False, 0.95), "b": (False, 0), "zone_cap": (False, None)})
        self._learning_raw = _require(top["learning"], "learning", {
            "adaptive_mu": (False, True), "dynamic_centroid": (False, True),
            "mu0": (False, None), "mu_skip_empty_epochs": (False, False)})
        self._engine_raw = _require(top["engine"], "engine", {
            "transit_enabled": (False, True), "en_route_switching": (False, True),
            "seed": (False, 1)})
        self.sim_config()   # fail fast on bad values

    # -- engine-facing surface ---------------------------------------------------

    def requests(self, seed: int):
        if self._requests_csv is not None:
            return read_requests_csv(self._requests_csv)
        spec = DemandSpec(lam_per_hour=self.lambda_per_hour,
                          horizon_min=self.demand_horizon_min,
                          rect=self.zones.rect, seed=seed)
        return generate(spec)

    def fleet_positions(self, n: int) -> list[Point]:
        if self.placement == "depot":
            return [self.depot] * n
        centers = self.zones.centers()
        return [centers[i % len(centers)] for i in range(n)]

    def sim_config(self, **overrides) -> SimConfig:
        d, r, l, e = self._dispatch_raw, self._relocation_raw, self._learning_raw, self._engine_raw
        cfg = SimConfig(
            fleet_size=self.fleet_size,
            capacity=self.capacity,
            relocation_interval_min=float(r["interval_min"]),
            warmup_min=float(r["warmup_min"]),
            relocation_policy=str(r["policy"]),
            theta=float(r["theta"]),
            eta=float(r["eta"]),
            queue_b=int(r["b"]),
            zone_cap=(int(r["zone_cap"]) if r["zone_cap"] is not None else None),
            en_route_switching=bool(e["en_route_switching"]),
            adaptive_mu=bool(l["adaptive_mu"]),
            dynamic_centroid=bool(l["dynamic_centroid"]),
            mu_skip_empty_epochs=bool(l["mu_skip_empty_epochs"]),
            transit_enabled=bool(e["transit_enabled"]) and self.network is not None,
            seed=int(e["seed"]),
            mu0=(float(l["mu0"]) if l["mu0"] is not None else None),
            dispatch=DispatchConfig(
                gamma=float(d["gamma"]), beta=float(d["beta"]),
                k_stations=int(d["k_stations"]),
                n_nearby=(int(d["n_nearby"]) if d["n_nearby"] is not None else None),
                walk_limit_min=float(d["walk_limit_min"]),
                rtr_wait_cap_min=float(d["rtr_wait_cap_min"]),
                rtr_soon_min=float(d["rtr_soon_min"])))
        for key, value in overrides.items():
            if hasattr(cfg, key):
                setattr(cfg, key, value)
            elif hasattr(cfg.dispatch, key):
                setattr(cfg.dispatch, key, value)
            else:
                raise ScenarioError(f"unknown config override {key!r}")
        return cfg

    def config_hash(self, config: SimConfig) -> str:
        blob = {"scenario": self.raw, "config": asdict(config)}
        canon = json.dumps(blob, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def with_demand(self, lam_per_hour: float) -> "Scenario":
        raw = json.loads(json.dumps(self.raw))
        raw["demand"]["lambda_per_hour"] = lam_per_hour
        return Scenario(raw, source=self.source)

    def with_headway(self, headway_min: float) -> "Scenario":
        raw = json.loads(json.dumps(self.raw))
        if raw["network"].get("transit"):
            raw["network"]["transit"]["headway_min"] = headway_min
            for line in raw["network"]["transit"]["lines"]:
                line.pop("headway_min", None)
        return Scenario(raw, source=self.source)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return Scenario(raw, base_dir=path.parent, source=str(path))


def bundled_scenario() -> Scenario:
    raw = json.loads(resources.files("transitshare.data")
                     .joinpath(BUNDLED_SCENARIO).read_text())
    return Scenario(raw, source=f"bundled:{BUNDLED_SCENARIO}")
