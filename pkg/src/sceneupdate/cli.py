"""Command-line driver.

Subcommands: ``plan-prior``, ``run``, ``baseline-rd``, ``evaluate`` and
``render``. Scenes come from JSON files (``--t1``/``--t2``) or from the
bundled pairs (``--bundled NAME``). Config values come from ``--config``
and are overridden by ``--seed``, ``--h`` and repeated ``--set key=value``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from sceneupdate.config import PlannerConfig, load_config
from sceneupdate.scene import BUNDLED_SCENES, load_bundled, load_scene

log = logging.getLogger("sceneupdate")


def _config(args) -> PlannerConfig:
    cfg = load_config(args.config) if args.config else PlannerConfig()
    changes = {}
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        try:
            changes[key] = json.loads(raw)
        except json.JSONDecodeError:
            changes[key] = raw
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.h is not None:
        changes["h"] = args.h
    if changes:
        cfg = PlannerConfig.from_dict({**cfg.to_dict(), **changes})
    return cfg


def _scenes(args, need_t2: bool = True):
    if args.bundled:
        return load_bundled(args.bundled)
    if not args.t1:
        raise ValueError("give --t1 (and --t2) or --bundled")
    t1 = load_scene(args.t1)
    if not need_t2:
        return t1, None
    if not args.t2:
        raise ValueError("--t2 is required")
    return t1, load_scene(args.t2)


def _noise(args, cfg):
    from sceneupdate.oracle import OracleNoise

    seed = cfg.seed if args.noise_seed is None else args.noise_seed
    return OracleNoise(args.dropout, args.jitter, seed)


def _grid(text: str) -> float:
    return float(Fraction(text))


def cmd_plan_prior(args) -> int:
    from sceneupdate.prior import plan_prior

    cfg = _config(args)
    t1, _ = _scenes(args, need_t2=False)
    plan = plan_prior(t1, cfg)
    data = {"config": cfg.to_dict(), **plan.to_dict()}
    Path(args.out).write_text(json.dumps(data, indent=1) + "\n")
    print(f"{len(plan.views)} views, path {plan.trajectory.length_m:.1f} m -> {args.out}")
    return 0


def cmd_run(args) -> int:
    from sceneupdate.realtime import run_mission

    cfg = _config(args)
    t1, t2 = _scenes(args)
    result = run_mission(t1, t2, cfg, _noise(args, cfg))
    result.save(args.out, timings=args.record_timing)
    print(f"{result.n_views} views, path {result.path_length_m:.1f} m, {len(result.targets)} targets -> {args.out}")
    return 0


def cmd_baseline_rd(args) -> int:
    from sceneupdate.baseline import baseline_rd

    cfg = _config(args)
    t1, t2 = _scenes(args)
    result = baseline_rd(t1, t2, _grid(args.grid), cfg, _noise(args, cfg))
    result.save(args.out)
    print(f"{result.n_views} views, path {result.path_length_m:.1f} m, {len(result.targets)} targets -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    from sceneupdate.metrics import evaluate_mission, format_table
    from sceneupdate.results import MissionResult

    t1, t2 = _scenes(args)
    reports = [evaluate_mission(MissionResult.load(p), t1, t2) for p in args.results]
    if args.out:
        if len(reports) == 1:
            reports[0].save(args.out)
        else:
            Path(args.out).write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n")
    table = format_table(reports)
    if args.text:
        Path(args.text).write_text(table)
    sys.stdout.write(table)
    return 0


def cmd_render(args) -> int:
    from sceneupdate.render import render_svg
    from sceneupdate.results import MissionResult

    t1, t2 = _scenes(args)
    result = MissionResult.load(args.results) if args.results else None
    render_svg(result, (t1, t2), args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sceneupdate", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scene_args(sp, t2=True):
        sp.add_argument("--t1", help="T1 scene JSON")
        if t2:
            sp.add_argument("--t2", help="T2 scene JSON")
        sp.add_argument("--bundled", choices=BUNDLED_SCENES, help="use a bundled scene pair")

    def cfg_args(sp):
        sp.add_argument("--config", help="PlannerConfig JSON")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--h", type=float, help="flight height (m)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")

    def noise_args(sp):
        sp.add_argument("--dropout", type=float, default=0.0)
        sp.add_argument("--jitter", type=float, default=0.0)
        sp.add_argument("--noise-seed", type=int)

    sp = sub.add_parser("plan-prior", help="plan the prior route over T1")
    scene_args(sp, t2=False)
    cfg_args(sp)
    sp.add_argument("--out", default="plan.json")
    sp.set_defaults(func=cmd_plan_prior)

    sp = sub.add_parser("run", help="fly a change-detection mission")
    scene_args(sp)
    cfg_args(sp)
    noise_args(sp)
    sp.add_argument("--record-timing", action="store_true",
                    help="keep planning wall times (makes the file run-dependent)")
    sp.add_argument("--out", default="results.json")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("baseline-rd", help="grid-sweep baseline")
    scene_args(sp)
    cfg_args(sp)
    noise_args(sp)
    sp.add_argument("--grid", default="1/3", help="cell size as a fraction of the bounds, e.g. 1/2")
    sp.add_argument("--out", default="results_rd.json")
    sp.set_defaults(func=cmd_baseline_rd)

    sp = sub.add_parser("evaluate", help="score results files")
    scene_args(sp)
    sp.add_argument("results", nargs="+")
    sp.add_argument("--out", default="report.json")
    sp.add_argument("--text", default="report.txt")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("render", help="draw a mission as SVG")
    scene_args(sp)
    sp.add_argument("--results")
    sp.add_argument("--out", default="render.svg")
    sp.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"sceneupdate {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
