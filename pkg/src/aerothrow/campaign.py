"""Batches of flights: paired seeds, aggregate statistics and file export."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .config import ScenarioConfig
from .errors import AerothrowError, InvalidInputError
from .sim import FlightResult, plan_for, run_flight

CSV_COLUMNS = ("scenario_id", "seed", "trigger_mode", "ablation", "v_release",
               "landing_error_m", "release_time_s", "tracking_rmse_m", "failed")


class ExportError(AerothrowError):
    def __init__(self, path, exc):
        super().__init__(f"cannot write {path}: {exc}")
        self.path = str(path)


@dataclass
class CellStats:
    scenario_id: str
    trigger_mode: str
    ablation: str
    n: int
    n_failed: int
    rmse: float
    mean: float
    median: float
    max: float


@dataclass
class CampaignResult:
    flights: list                       # FlightResult, sorted by key
    cells: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [f for f in self.flights if f.failed]

    def cell(self, scenario_id: str, trigger_mode: str, ablation: str) -> CellStats:
        for c in self.cells:
            if (c.scenario_id, c.trigger_mode, c.ablation) == (scenario_id, trigger_mode, ablation):
                return c
        raise KeyError((scenario_id, trigger_mode, ablation))

    def table(self) -> str:
        lines = [f"{'scenario':<12} {'trigger':<9} {'ablation':<8} {'n':>3} "
                 f"{'RMSE[cm]':>9} {'MEAN[cm]':>9} {'MED[cm]':>8} {'MAX[cm]':>8}"]
        for c in self.cells:
            lines.append(f"{c.scenario_id:<12} {c.trigger_mode:<9} {c.ablation:<8} {c.n:>3} "
                         f"{100 * c.rmse:9.2f} {100 * c.mean:9.2f} {100 * c.median:8.2f} {100 * c.max:8.2f}")
        fails = self.failures
        lines.append(f"failed flights: {len(fails)}")
        for f in fails:
            lines.append(f"  {f.scenario_id} seed={f.seed} {f.trigger_mode}/{f.ablation}: {f.reason}")
        return "\n".join(lines)


def landing_stats(errors: Sequence[float]) -> tuple:
    """(RMSE, MEAN, MEDIAN, MAX) of a list of landing errors; NaNs if empty."""
    e = np.asarray(list(errors), dtype=float)
    if e.size == 0:
        return (math.nan,) * 4
    return (float(np.sqrt(np.mean(e * e))), float(np.mean(e)), float(np.median(e)), float(np.max(e)))


def _key(f: FlightResult):
    return (f.scenario_id, f.trigger_mode, f.ablation, f.seed)


def aggregate(flights: Iterable[FlightResult]) -> CampaignResult:
    flights = sorted(flights, key=_key)
    groups: dict = {}
    for f in flights:
        groups.setdefault(_key(f)[:3], []).append(f)
    cells = []
    for (sid, trig, abl), fs in sorted(groups.items()):
        ok = [f.landing_error for f in fs if not f.failed]
        cells.append(CellStats(sid, trig, abl, len(ok), len(fs) - len(ok), *landing_stats(ok)))
    return CampaignResult(flights, cells)


def expand(scenarios: Sequence[ScenarioConfig], seeds: Sequence[int],
           triggers: Optional[Sequence[str]] = None, ablations: Optional[Sequence[str]] = None) -> list:
    """Cartesian product of scenarios x triggers x ablations x seeds (paired seeds across arms)."""
    jobs = []
    for sc in scenarios:
        for trig in (triggers or [sc.trigger]):
            for abl in (ablations or [sc.ablation]):
                for seed in seeds:
                    jobs.append(sc.with_(trigger=trig, ablation=abl, seed=int(seed)))
    return jobs


def _fly_job(args):
    sc, plan, keep_logs = args
    return run_flight(sc, plan, keep_logs=keep_logs)


def run_campaign(scenarios: Sequence[ScenarioConfig], repeats: int = 10, seeds: Optional[Sequence[int]] = None,
                 triggers=None, ablations=None, workers: int = 1, keep_logs: bool = False) -> CampaignResult:
    """Fly every (scenario, trigger, ablation, seed) cell and aggregate.

    Plans are computed once per distinct planner configuration in this process
    and shipped to the workers, so results do not depend on the worker count.
    """
    if repeats < 1:
        raise InvalidInputError("repeats must be at least 1")
    seeds = list(range(repeats)) if seeds is None else [int(s) for s in seeds]
    jobs = expand(scenarios, seeds, triggers, ablations)
    args = []
    for sc in jobs:
        plan = None
        try:
            plan = plan_for(sc)
        except AerothrowError:
            pass                        # run_flight reports the failure
        args.append((sc, plan, keep_logs))
    if workers <= 1 or len(args) <= 1:
        flights = [_fly_job(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flights = list(pool.map(_fly_job, args, chunksize=1))
    return aggregate(flights)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(flights: Iterable[FlightResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for f in sorted(flights, key=_key):
        s = f.summary()
        w.writerow([_fmt(s[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def trace_record(f: FlightResult) -> dict:
    return {**f.summary(), "reason": f.reason, "landing_point": [float(x) for x in f.landing_point],
            "trigger_time": f.trigger_time, "planned_release_time": f.planned_release_time,
            "observer_trace": [list(r) for r in f.observer_trace],
            "decision_trace": [list(r) for r in f.decision_trace],
            "state_log": [list(r) for r in f.state_log]}


def read_traces(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def export_results(result, out_dir, stem: str = "campaign") -> dict:
    """Write ``<stem>.csv``, ``<stem>_traces.jsonl``, ``<stem>_plots.json`` and ``<stem>_table.txt``."""
    flights = result.flights if isinstance(result, CampaignResult) else list(result)
    agg = result if isinstance(result, CampaignResult) else aggregate(flights)
    out = Path(out_dir)
    paths = {"csv": out / f"{stem}.csv", "traces": out / f"{stem}_traces.jsonl",
             "plots": out / f"{stem}_plots.json", "table": out / f"{stem}_table.txt"}
    plots = {"flights": [{"scenario_id": f.scenario_id, "seed": f.seed, "trigger_mode": f.trigger_mode,
                          "ablation": f.ablation, "release_time": f.release_time,
                          "t": [r[0] for r in f.observer_trace],
                          "f_ext_hat": [list(r[1:]) for r in f.observer_trace],
                          "position": [list(r[1:4]) for r in f.state_log]}
                         for f in sorted(flights, key=_key)]}
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths["csv"].write_text(csv_text(flights))
        with open(paths["traces"], "w") as fh:
            for f in sorted(flights, key=_key):
                fh.write(json.dumps(trace_record(f)) + "\n")
        paths["plots"].write_text(json.dumps(plots))
        paths["table"].write_text(agg.table() + "\n")
    except OSError as exc:
        raise ExportError(getattr(exc, "filename", None) or out, exc) from exc
    return paths
