"""Command-line entry point: ``aerothrow {plan,fly,campaign,sweep-tau}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .campaign import export_results, run_campaign
from .config import ABLATIONS, TRIGGER_MODES, bundled, bundled_scenarios, load_scenario
from .errors import AerothrowError
from .planner import optimize, release_window_duration
from .sim import plan_for, run_flight


def _scenario(ref: str):
    """A scenario file path, or the name of a bundled scenario."""
    if Path(ref).is_file():
        return load_scenario(ref)
    return bundled(ref)


def _overrides(sc, args):
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "trigger", None):
        changes["trigger"] = args.trigger
    if getattr(args, "ablation", None):
        changes["ablation"] = args.ablation
    return sc.with_(**changes) if changes else sc


def cmd_plan(args) -> int:
    sc = _scenario(args.scenario[0])
    res = plan_for(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{sc.scenario_id}_plan.json"
    path.write_text(res.to_json(sc.planner, sc.payload.offset))
    print(f"{sc.scenario_id}: {res.status}, t_r={res.window.t_r:.4f} s, "
          f"worst window error {100 * res.worst_window_error:.2f} cm -> {path}")
    return 0 if res.converged else 2


def cmd_fly(args) -> int:
    sc = _overrides(_scenario(args.scenario[0]), args)
    r = run_flight(sc)
    paths = export_results([r], args.out, stem=f"{sc.scenario_id}_seed{sc.seed}")
    if r.failed:
        print(f"flight failed: {r.reason}", file=sys.stderr)
        return 2
    print(f"{sc.scenario_id}: landing error {100 * r.landing_error:.2f} cm, release at {r.release_time:.3f} s, "
          f"v_r={r.v_release:.2f} m/s, tracking RMSE {100 * r.tracking_rmse:.2f} cm -> {paths['csv']}")
    return 0


def cmd_campaign(args) -> int:
    names = args.scenario or sorted(bundled_scenarios())
    scenarios = [_scenario(n) for n in names]
    seeds = list(range(args.seed, args.seed + args.repeats)) if args.seed is not None else None
    res = run_campaign(scenarios, repeats=args.repeats, seeds=seeds,
                       triggers=[args.trigger] if args.trigger else None,
                       ablations=[args.ablation] if args.ablation else None,
                       workers=args.workers, keep_logs=args.traces)
    export_results(res, args.out)
    print(res.table())
    return 0


def cmd_sweep_tau(args) -> int:
    sc = _scenario(args.scenario[0])
    rows = []
    for tau in args.taus:
        cfg = dataclasses.replace(sc.planner, tau=tau)
        res = optimize(cfg)
        row = {"tau": tau, "converged": res.converged, "t_r": res.window.t_r}
        for thr in args.thresholds:
            row[f"window_{thr:g}"] = release_window_duration(res.trajectory, res.window.t_r, thr, cfg.target,
                                                             cfg.g_mag)
        rows.append(row)
        print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{sc.scenario_id}_sweep_tau.json").write_text(json.dumps(rows, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aerothrow", description="Aerial throwing planner and flight simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, many=False):
        sp.add_argument("--scenario", action="append", required=not many,
                        help="scenario file (JSON/TOML) or bundled scenario name")
        sp.add_argument("--out", default="out")

    sp = sub.add_parser("plan", help="optimize the throwing trajectory")
    common(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("fly", help="simulate one flight")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trigger", choices=TRIGGER_MODES)
    sp.add_argument("--ablation", choices=ABLATIONS)
    sp.set_defaults(func=cmd_fly)

    sp = sub.add_parser("campaign", help="paired-seed batch of flights with summary statistics")
    common(sp, many=True)
    sp.add_argument("--seed", type=int, help="first seed; seeds are seed..seed+repeats-1")
    sp.add_argument("--repeats", type=int, default=10)
    sp.add_argument("--trigger", choices=TRIGGER_MODES)
    sp.add_argument("--ablation", choices=ABLATIONS)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--traces", action="store_true", help="keep per-tick logs in the trace export")
    sp.set_defaults(func=cmd_campaign)

    sp = sub.add_parser("sweep-tau", help="release-window length versus window half-width")
    common(sp)
    sp.add_argument("--taus", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.3])
    sp.add_argument("--thresholds", type=float, nargs="+", default=[0.02, 0.05, 0.1])
    sp.set_defaults(func=cmd_sweep_tau)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    np.set_printoptions(precision=4, suppress=True)
    try:
        return args.func(args)
    except AerothrowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
