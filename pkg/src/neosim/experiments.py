"""Scenario presets, Monte Carlo sweeps, aggregation, and file output.

A sweep expands a scenario into cells (inflow x penetration x model x noise),
derives one seed per run by hashing the cell coordinates, executes the runs
(optionally across processes), and emits a per-run CSV plus an aggregate
summary.  Zero-penetration cells collapse to a single human-only baseline per
inflow; gains are reported against that baseline.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .engine import (IncidentSpec, ModelSpec, SimConfig, Simulation,
                     SimulationError, altruistic_mobil_model, human_model,
                     neo_model)
from .incident import NoiseSpec
from .road import HighwaySegment, OffRamp

CSV_HEADER = ("scenario,model,inflow,p_cav,sigma_x,sigma_v,seed,"
              "mean_speed_all,mean_speed_cav,offramp_attempts,offramp_failures")

BUILTIN_SCENARIOS = ("disc-stopped", "disc-slow", "mand-overtake")

DEFAULT_INFLOWS = (800.0, 1000.0, 1200.0, 1400.0)
DEFAULT_PENETRATIONS = (0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """A full experiment grid over one road/incident geometry."""

    name: str
    segment: HighwaySegment
    incident: IncidentSpec | None
    sim: SimConfig
    models: tuple[ModelSpec, ...]
    inflows: tuple[float, ...] = DEFAULT_INFLOWS
    penetrations: tuple[float, ...] = DEFAULT_PENETRATIONS
    noise_grid: tuple[NoiseSpec, ...] = (NoiseSpec(),)
    n_runs: int = 100
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if not self.models:
            raise ValueError("at least one model is required")
        ids = [m.id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ValueError("model ids must be unique")
        for p in self.penetrations:
            if not 0.0 <= p <= 1.0:
                raise ValueError("penetrations must be probabilities")
        for q in self.inflows:
            if q < 0:
                raise ValueError("inflows must be >= 0")


@dataclass(frozen=True)
class Cell:
    """One grid coordinate; the unit of aggregation."""

    scenario: str
    model: str
    inflow: float
    p_cav: float
    sigma_x: float
    sigma_v: float


@dataclass(frozen=True)
class RunMetrics:
    """Outcome of one simulation run, tagged with its cell coordinates."""

    scenario: str
    model: str
    inflow: float
    p_cav: float
    sigma_x: float
    sigma_v: float
    seed: int
    run_index: int
    mean_speed_all: float
    mean_speed_cav: float | None
    offramp_attempts: int
    offramp_failures: int
    offramp_attempts_cav: int
    offramp_failures_cav: int
    offramp_attempts_human: int
    offramp_failures_human: int
    wall_time: float


@dataclass(frozen=True)
class RunFailure:
    """Error record for a run that aborted; the sweep continues past it."""

    scenario: str
    model: str
    inflow: float
    p_cav: float
    sigma_x: float
    sigma_v: float
    seed: int
    run_index: int
    step: int
    message: str


@dataclass(frozen=True)
class CellStats:
    """Aggregates over one cell's runs (normal-approximation 95% CI)."""

    scenario: str
    model: str
    inflow: float
    p_cav: float
    sigma_x: float
    sigma_v: float
    n: int
    mean_speed_all: float
    std_speed_all: float
    ci95_speed_all: float
    mean_speed_cav: float | None
    std_speed_cav: float | None
    ci95_speed_cav: float | None
    offramp_attempts: int
    offramp_failures: int
    failure_rate: float | None
    failure_rate_cav: float | None
    failure_rate_human: float | None
    gain_abs: float | None  # vs. the human-only cell at the same inflow
    gain_pct: float | None


@dataclass(frozen=True)
class SweepResult:
    config: ScenarioConfig
    runs: tuple[RunMetrics, ...]
    failures: tuple[RunFailure, ...]


def builtin_scenario(name: str) -> ScenarioConfig:
    """Pre-wired scenario grids covering the standard evaluation set-ups."""
    models = (altruistic_mobil_model(), neo_model(0.0), neo_model(1.0))
    if name == "disc-stopped":
        return ScenarioConfig(
            name=name, segment=HighwaySegment(2000.0, 3),
            incident=IncidentSpec("stopped", 1500.0, 0.0, 0),
            sim=SimConfig(routing_fraction=0.0), models=models)
    if name == "disc-slow":
        return ScenarioConfig(
            name=name, segment=HighwaySegment(2000.0, 3),
            incident=IncidentSpec("slow", 100.0, 10.0, 0),
            sim=SimConfig(routing_fraction=0.0), models=models)
    if name == "mand-overtake":
        # the unforced-politeness variant is dropped here: with mandatory
        # pressure dominating, politeness 0 vs 1 is not a separate axis
        return ScenarioConfig(
            name=name,
            segment=HighwaySegment(2000.0, 3, OffRamp(1900.0, 0)),
            incident=IncidentSpec("slow", 100.0, 5.0, 0),
            sim=SimConfig(routing_fraction=0.2),
            models=(altruistic_mobil_model(), neo_model(0.0)))
    raise ValueError(f"unknown scenario {name!r}; "
                     f"choose from {', '.join(BUILTIN_SCENARIOS)}")


def _num(x: float) -> str:
    return f"{x:g}"


def seed_for(base_seed: int, cell: Cell, run_index: int) -> int:
    """Deterministic 63-bit run seed from the cell coordinates."""
    key = "|".join([
        str(int(base_seed)), cell.scenario, cell.model, _num(cell.inflow),
        _num(cell.p_cav), _num(cell.sigma_x), _num(cell.sigma_v),
        str(int(run_index)),
    ])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def expand_cells(cfg: ScenarioConfig) -> list[tuple[Cell, ModelSpec]]:
    """The cell list, in output order.  All zero-penetration coordinates
    collapse to one noise-free human baseline cell per inflow."""
    out: list[tuple[Cell, ModelSpec]] = []
    seen: set[Cell] = set()
    for inflow in cfg.inflows:
        for p in cfg.penetrations:
            if p == 0.0:
                cell = Cell(cfg.name, cfg.sim.model_human.id, inflow,
                            0.0, 0.0, 0.0)
                if cell not in seen:
                    seen.add(cell)
                    out.append((cell, cfg.sim.model_human))
                continue
            for model in cfg.models:
                for ns in cfg.noise_grid:
                    cell = Cell(cfg.name, model.id, inflow, p,
                                ns.sigma_x, ns.sigma_v)
                    if cell not in seen:
                        seen.add(cell)
                        out.append((cell, model))
    return out


def _execute(cfg: ScenarioConfig, cell: Cell, model: ModelSpec,
             run_index: int, seed: int, trace_hook=None) -> RunMetrics:
    sim_cfg = replace(cfg.sim, seed=seed, inflow_per_lane=cell.inflow,
                      p_cav=cell.p_cav, model_cav=model)
    noise = NoiseSpec(cell.sigma_x, cell.sigma_v)
    t0 = time.perf_counter()
    sim = Simulation(cfg.segment, sim_cfg, incident=cfg.incident,
                     noise=noise, trace_hook=trace_hook)
    res = sim.run()
    wall = time.perf_counter() - t0
    return RunMetrics(
        scenario=cell.scenario, model=cell.model, inflow=cell.inflow,
        p_cav=cell.p_cav, sigma_x=cell.sigma_x, sigma_v=cell.sigma_v,
        seed=seed, run_index=run_index,
        mean_speed_all=res.mean_speed_all, mean_speed_cav=res.mean_speed_cav,
        offramp_attempts=res.offramp_attempts,
        offramp_failures=res.offramp_failures,
        offramp_attempts_cav=res.offramp_attempts_cav,
        offramp_failures_cav=res.offramp_failures_cav,
        offramp_attempts_human=res.offramp_attempts_human,
        offramp_failures_human=res.offramp_failures_human,
        wall_time=wall)


def run_scenario(cfg: ScenarioConfig, seed: int,
                 trace_hook=None) -> RunMetrics:
    """One simulation with the scenario's own sim settings and the given
    seed.  Raises SimulationError on an invariant abort."""
    model = cfg.sim.model_cav if cfg.sim.p_cav > 0 else cfg.sim.model_human
    ns = cfg.noise_grid[0] if cfg.noise_grid else NoiseSpec()
    cell = Cell(cfg.name, model.id, cfg.sim.inflow_per_lane, cfg.sim.p_cav,
                ns.sigma_x, ns.sigma_v)
    return _execute(cfg, cell, cfg.sim.model_cav, 0, seed,
                    trace_hook=trace_hook)


def _trace_filename(cell: Cell, run_index: int) -> str:
    return (f"{cell.scenario}-{cell.model}-q{_num(cell.inflow)}"
            f"-p{_num(cell.p_cav)}-sx{_num(cell.sigma_x)}"
            f"-sv{_num(cell.sigma_v)}-r{run_index}.jsonl")


def _sweep_task(payload) -> RunMetrics | RunFailure:
    cfg, cell, model, run_index, seed, trace_dir = payload
    fh = None
    hook = None
    if trace_dir is not None:
        path = os.path.join(trace_dir, _trace_filename(cell, run_index))
        fh = open(path, "w", encoding="utf-8", newline="")
        hook = lambda rec: fh.write(json.dumps(rec) + "\n")
    try:
        return _execute(cfg, cell, model, run_index, seed, trace_hook=hook)
    except SimulationError as e:
        return RunFailure(scenario=cell.scenario, model=cell.model,
                          inflow=cell.inflow, p_cav=cell.p_cav,
                          sigma_x=cell.sigma_x, sigma_v=cell.sigma_v,
                          seed=seed, run_index=run_index, step=e.step,
                          message=str(e))
    finally:
        if fh is not None:
            fh.close()


def _row_key(r) -> tuple:
    return (r.scenario, r.model, r.inflow, r.p_cav, r.sigma_x, r.sigma_v,
            r.seed)


def sweep(cfg: ScenarioConfig, workers: int = 1,
          trace_dir: str | None = None) -> SweepResult:
    """Run the full grid (n_runs seeds per cell).  Aborted runs are recorded
    as failures without stopping the sweep; output ordering is independent
    of scheduling."""
    if trace_dir is not None:
        os.makedirs(trace_dir, exist_ok=True)
    tasks = []
    for cell, model in expand_cells(cfg):
        for i in range(cfg.n_runs):
            tasks.append((cfg, cell, model, i,
                          seed_for(cfg.base_seed, cell, i), trace_dir))
    if workers <= 1:
        outs = [_sweep_task(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_sweep_task, tasks, chunksize=chunk))
    runs = sorted((o for o in outs if isinstance(o, RunMetrics)), key=_row_key)
    fails = sorted((o for o in outs if isinstance(o, RunFailure)), key=_row_key)
    return SweepResult(config=cfg, runs=tuple(runs), failures=tuple(fails))


def _mean_std_ci(values: list[float]) -> tuple[float, float, float]:
    arr = np.asarray(values, float)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std, 1.96 * std / math.sqrt(arr.size)


def aggregate(runs) -> list[CellStats]:
    """Per-cell aggregates plus gains against the human-only baseline cell
    at the same (scenario, inflow).  Permutation-invariant in run order."""
    groups: dict[tuple, list[RunMetrics]] = {}
    for r in runs:
        key = (r.scenario, r.model, r.inflow, r.p_cav, r.sigma_x, r.sigma_v)
        groups.setdefault(key, []).append(r)

    baselines: dict[tuple[str, float], float] = {}
    for key, rs in groups.items():
        scenario, _, inflow, p_cav = key[0], key[1], key[2], key[3]
        if p_cav == 0.0:
            baselines[(scenario, inflow)] = float(
                np.mean([r.mean_speed_all for r in rs]))

    out = []
    for key in sorted(groups):
        rs = groups[key]
        scenario, model, inflow, p_cav, sx, sv = key
        mean_all, std_all, ci_all = _mean_std_ci([r.mean_speed_all for r in rs])
        cav_vals = [r.mean_speed_cav for r in rs if r.mean_speed_cav is not None]
        if cav_vals:
            mean_cav, std_cav, ci_cav = _mean_std_ci(cav_vals)
        else:
            mean_cav = std_cav = ci_cav = None
        att = sum(r.offramp_attempts for r in rs)
        fail = sum(r.offramp_failures for r in rs)
        att_c = sum(r.offramp_attempts_cav for r in rs)
        fail_c = sum(r.offramp_failures_cav for r in rs)
        att_h = sum(r.offramp_attempts_human for r in rs)
        fail_h = sum(r.offramp_failures_human for r in rs)
        base = baselines.get((scenario, inflow))
        gain_abs = mean_all - base if base is not None else None
        gain_pct = (100.0 * gain_abs / base
                    if base not in (None, 0.0) else None)
        out.append(CellStats(
            scenario=scenario, model=model, inflow=inflow, p_cav=p_cav,
            sigma_x=sx, sigma_v=sv, n=len(rs),
            mean_speed_all=mean_all, std_speed_all=std_all,
            ci95_speed_all=ci_all, mean_speed_cav=mean_cav,
            std_speed_cav=std_cav, ci95_speed_cav=ci_cav,
            offramp_attempts=att, offramp_failures=fail,
            failure_rate=(fail / att if att else None),
            failure_rate_cav=(fail_c / att_c if att_c else None),
            failure_rate_human=(fail_h / att_h if att_h else None),
            gain_abs=gain_abs, gain_pct=gain_pct))
    return out


def _fmt(x) -> str:
    """Float cell formatting: 6 significant digits, '.' decimal point."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"


def csv_lines(runs) -> list[str]:
    lines = [CSV_HEADER]
    for r in runs:
        lines.append(",".join([
            r.scenario, r.model, _fmt(r.inflow), _fmt(r.p_cav),
            _fmt(r.sigma_x), _fmt(r.sigma_v), str(r.seed),
            _fmt(r.mean_speed_all), _fmt(r.mean_speed_cav),
            str(r.offramp_attempts), str(r.offramp_failures)]))
    return lines


def _opt(x) -> str:
    return "-" if x is None else _fmt(x)


def summary_lines(result: SweepResult) -> list[str]:
    cfg = result.config
    lines = [
        f"scenario={cfg.name} n_runs={cfg.n_runs} base_seed={cfg.base_seed} "
        f"runs_ok={len(result.runs)} runs_failed={len(result.failures)}",
    ]
    for c in aggregate(result.runs):
        lines.append(
            f"cell scenario={c.scenario} model={c.model} "
            f"inflow={_fmt(c.inflow)} p_cav={_fmt(c.p_cav)} "
            f"sigma_x={_fmt(c.sigma_x)} sigma_v={_fmt(c.sigma_v)} n={c.n} "
            f"mean_speed_all={_fmt(c.mean_speed_all)} "
            f"std={_fmt(c.std_speed_all)} ci95={_fmt(c.ci95_speed_all)} "
            f"mean_speed_cav={_opt(c.mean_speed_cav)} "
            f"std_cav={_opt(c.std_speed_cav)} ci95_cav={_opt(c.ci95_speed_cav)} "
            f"offramp_attempts={c.offramp_attempts} "
            f"offramp_failures={c.offramp_failures} "
            f"failure_rate={_opt(c.failure_rate)} "
            f"failure_rate_cav={_opt(c.failure_rate_cav)} "
            f"failure_rate_human={_opt(c.failure_rate_human)} "
            f"gain_abs={_opt(c.gain_abs)} gain_pct={_opt(c.gain_pct)}")
    for f in result.failures:
        lines.append(
            f"failed scenario={f.scenario} model={f.model} "
            f"inflow={_fmt(f.inflow)} p_cav={_fmt(f.p_cav)} "
            f"sigma_x={_fmt(f.sigma_x)} sigma_v={_fmt(f.sigma_v)} "
            f"seed={f.seed} run_index={f.run_index} step={f.step} "
            f"message={f.message!r}")
    return lines


def ensure_writable(out_dir: str) -> None:
    """Fail fast (before any simulation) if the output directory is not
    writable."""
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, ".write-probe")
    with open(probe, "w", encoding="utf-8") as fh:
        fh.write("")
    os.remove(probe)


def write_outputs(result: SweepResult, out_dir: str) -> tuple[str, str]:
    """Write runs.csv and summary.txt (LF newlines); returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "runs.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(csv_lines(result.runs)) + "\n")
    summary_path = os.path.join(out_dir, "summary.txt")
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(summary_lines(result)) + "\n")
    return csv_path, summary_path
