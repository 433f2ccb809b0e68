"""Command line: single runs, parameter sweeps, comparisons, validation.

Every run writes metrics.csv plus the epoch/relocation/decision logs into
the output directory, and renders the trace figures next to them unless
--no-plots is given. Sweep cells are cached by config hash, so an aborted
sweep resumes where it stopped.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

from . import engine, report
from .scenario import Scenario, ScenarioError, bundled_scenario, load_scenario

logger = logging.getLogger(__name__)


def _parse_on_off(value: str) -> bool:
    low = value.strip().lower()
    if low in ("on", "true", "1", "yes"):
        return True
    if low in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on|off, got {value!r}")


def _load(args) -> Scenario:
    return load_scenario(args.scenario) if args.scenario else bundled_scenario()


def run_single(scenario: Scenario, config: engine.SimConfig):
    """One deterministic run; returns (report, config hash)."""
    chash = scenario.config_hash(config)
    rep = engine.run(scenario, config)
    return rep, chash


def _apply_common_overrides(scenario: Scenario, args):
    if getattr(args, "headway", None) is not None:
        scenario = scenario.with_headway(args.headway)
    if getattr(args, "lam", None) is not None:
        scenario = scenario.with_demand(args.lam)
    cfg = scenario.sim_config()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.policy is not None:
        cfg.relocation_policy = args.policy
    if args.transit is not None:
        cfg.transit_enabled = args.transit and scenario.network is not None
    if args.theta is not None:
        cfg.theta = args.theta
    if args.fleet is not None:
        cfg.fleet_size = args.fleet
    if args.switching is not None:
        cfg.en_route_switching = args.switching
    if args.adaptive_mu is not None:
        cfg.adaptive_mu = args.adaptive_mu
    if args.dynamic_centroid is not None:
        cfg.dynamic_centroid = args.dynamic_centroid
    if args.gamma is not None:
        cfg.dispatch.gamma = args.gamma
    return scenario, cfg


def _resolve_beta(scenario: Scenario, cfg, args) -> float:
    """beta from --beta directly, or --beta-k scaled by the myopic mean VTL."""
    if args.beta is not None:
        return args.beta
    if args.beta_k is None:
        return cfg.dispatch.beta
    if args.beta_k == 0:
        return 0.0
    tbar = args.beta_tbar
    if tbar is None:
        logger.info("calibrating beta: running the beta=0 baseline for T-bar")
        base_cfg = scenario.sim_config()
        for field in ("seed", "relocation_policy", "transit_enabled", "theta",
                      "fleet_size", "en_route_switching", "adaptive_mu",
                      "dynamic_centroid"):
            setattr(base_cfg, field, getattr(cfg, field))
        base_cfg.dispatch = cfg.dispatch.__class__(**{**cfg.dispatch.__dict__, "beta": 0.0})
        rep, _ = run_single(scenario, base_cfg)
        tbar = rep.vtl_mean
        logger.info("T-bar (mean VTL at beta=0) = %.3f min", tbar)
    return args.beta_k / tbar


def cmd_run(args) -> int:
    scenario = _load(args)
    scenario, cfg = _apply_common_overrides(scenario, args)
    cfg.dispatch.beta = _resolve_beta(scenario, cfg, args)
    cfg.collect_events = bool(args.events)
    rep, chash = run_single(scenario, cfg)
    outdir = Path(args.out)
    report.write_run_outputs(outdir, rep, chash, events=args.events)
    if not args.no_plots:
        report.render_zone_traces(rep.epoch_rows, outdir / "zone_traces.png")
    row = rep.metrics_row(chash)
    print(",".join(report.METRICS_COLUMNS))
    print(",".join(report.fmt(row[c]) for c in report.METRICS_COLUMNS))
    logger.info("run complete: %d customers, final clock %.1f min, outputs in %s",
                rep.customers, rep.final_clock, outdir)
    return 0


# -- sweep --------------------------------------------------------------------

_AXES = ("beta-k", "theta", "headway", "lambda", "fleet", "policy", "switching",
         "adaptive-mu", "dynamic-centroid", "transit", "seed")


def _parse_axis(spec: str) -> tuple[str, list]:
    if "=" not in spec:
        raise argparse.ArgumentTypeError(f"axis {spec!r} must look like name=v1,v2 or name=a..b")
    name, _, body = spec.partition("=")
    name = name.strip()
    if name not in _AXES:
        raise argparse.ArgumentTypeError(f"unknown axis {name!r}; one of {_AXES}")
    body = body.strip()
    if ".." in body:
        lo, _, hi = body.partition("..")
        values = list(range(int(lo), int(hi) + 1))
    else:
        values = [v.strip() for v in body.split(",") if v.strip()]
        if name in ("beta-k", "fleet", "seed"):
            values = [int(v) for v in values]
        elif name in ("theta", "headway", "lambda"):
            values = [float(v) for v in values]
        elif name in ("switching", "adaptive-mu", "dynamic-centroid", "transit"):
            values = [_parse_on_off(v) for v in values]
    return name, values


def _cell_config(scenario: Scenario, cell: dict):
    if "headway" in cell:
        scenario = scenario.with_headway(cell["headway"])
    if "lambda" in cell:
        scenario = scenario.with_demand(cell["lambda"])
    cfg = scenario.sim_config()
    setters = {"theta": "theta", "fleet": "fleet_size", "policy": "relocation_policy",
               "switching": "en_route_switching", "adaptive-mu": "adaptive_mu",
               "dynamic-centroid": "dynamic_centroid", "transit": "transit_enabled",
               "seed": "seed"}
    for axis, attr in setters.items():
        if axis in cell:
            setattr(cfg, attr, cell[axis])
    cfg.collect_events = False
    return scenario, cfg


def cmd_sweep(args) -> int:
    scenario = _load(args)
    try:
        axes = [_parse_axis(a) for a in args.axis] if args.axis else []
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    names = [n for n, _ in axes]
    if len(set(names)) != len(names):
        print("error: repeated sweep axis", file=sys.stderr)
        return 1
    cells = [dict(zip(names, combo))
             for combo in itertools.product(*[v for _, v in axes])] or [{}]
    outdir = Path(args.out)
    celldir = outdir / "cells"
    celldir.mkdir(parents=True, exist_ok=True)

    tbar_cache: dict[str, float] = {}

    def run_cell(cell_scenario, cfg):
        chash = cell_scenario.config_hash(cfg)
        cache = celldir / f"{chash}.json"
        if cache.exists():
            return json.loads(cache.read_text()), chash
        rep, _ = run_single(cell_scenario, cfg)
        row = rep.metrics_row(chash)
        cache.write_text(json.dumps(row))
        return row, chash

    rows = []
    for cell in cells:
        cell_scn, cfg = _cell_config(scenario, cell)
        tbar = None
        if "beta-k" in cell:
            base_cell = {k: v for k, v in cell.items() if k != "beta-k"}
            base_scn, base_cfg = _cell_config(scenario, base_cell)
            base_cfg.dispatch.beta = 0.0
            base_hash = base_scn.config_hash(base_cfg)
            if base_hash not in tbar_cache:
                base_row, _ = run_cell(base_scn, base_cfg)
                tbar_cache[base_hash] = float(base_row["VTL_mean"])
            tbar = tbar_cache[base_hash]
            cfg.dispatch.beta = (cell["beta-k"] / tbar) if cell["beta-k"] else 0.0
        row, chash = run_cell(cell_scn, cfg)
        out_row = dict(cell)
        if tbar is not None:
            out_row["tbar"] = tbar
        out_row.update(row)
        rows.append(out_row)
        logger.info("cell %s -> VTL %.6g JT %.6g", cell, float(row["VTL_mean"]),
                    float(row["JT_mean"]))

    columns = names + (["tbar"] if any("tbar" in r for r in rows) else []) \
        + report.METRICS_COLUMNS
    report.write_rows(outdir / "sweep.csv", columns, rows)
    if not args.no_plots and len(names) == 1:
        report.render_sweep(rows, names[0], outdir / f"sweep_{names[0]}.png")
    print(f"{len(rows)} cells -> {outdir / 'sweep.csv'}")
    return 0


def cmd_compare(args) -> int:
    base = report.read_metrics_csv(args.baseline)
    var = report.read_metrics_csv(args.variant)
    try:
        deltas = report.compare_metrics(base, var)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    cols = ["row"] + [c for c in report.METRICS_COLUMNS
                      if c not in ("config_hash", "sim_wall_seconds")]
    print(",".join(cols))
    for row in deltas:
        print(",".join(str(row[c]) for c in cols))
    if args.out:
        report.write_compare_csv(Path(args.out) / "compare.csv", deltas)
    return 0


def cmd_validate(args) -> int:
    scenario = _load(args)
    n_st = len(scenario.network) if scenario.network else 0
    print(f"ok: {scenario.source}: {len(scenario.zones)} zones, {n_st} stations, "
          f"fleet {scenario.fleet_size}, demand {scenario.lambda_per_hour}/h "
          f"over {scenario.demand_horizon_min} min")
    return 0


def _add_common(p: argparse.ArgumentParser, with_overrides: bool = True) -> None:
    p.add_argument("--scenario", help="scenario JSON (default: bundled synthetic grid)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    if with_overrides:
        p.add_argument("--seed", type=int)
        p.add_argument("--policy", choices=("waiting", "busiest", "myopic", "nonmyopic"))
        p.add_argument("--transit", type=_parse_on_off, metavar="on|off")
        p.add_argument("--headway", type=float, help="transit headway in minutes")
        p.add_argument("--beta", type=float, help="look-ahead weight directly")
        p.add_argument("--beta-k", type=int, dest="beta_k",
                       help="look-ahead as k / (mean VTL of a beta=0 run)")
        p.add_argument("--beta-tbar", type=float, dest="beta_tbar",
                       help="reuse a known beta=0 mean VTL instead of rerunning")
        p.add_argument("--theta", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--fleet", type=int)
        p.add_argument("--switching", type=_parse_on_off, metavar="on|off")
        p.add_argument("--adaptive-mu", type=_parse_on_off, dest="adaptive_mu",
                       metavar="on|off")
        p.add_argument("--dynamic-centroid", type=_parse_on_off, dest="dynamic_centroid",
                       metavar="on|off")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transitshare",
        description="Dynamic ridesharing with integrated transit transfers: "
                    "simulate, sweep, compare.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one simulation run")
    _add_common(p_run)
    p_run.add_argument("--events", action="store_true", help="also write events.csv")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="cartesian parameter sweep")
    p_sweep.add_argument("--axis", action="append",
                         help="axis spec, e.g. beta-k=0..10 or headway=5,10,20")
    _add_common(p_sweep, with_overrides=False)
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="percentage deltas between two metrics files")
    p_cmp.add_argument("baseline")
    p_cmp.add_argument("variant")
    p_cmp.add_argument("--out", default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate", help="schema-check a scenario file")
    p_val.add_argument("--scenario")
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, engine.SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
