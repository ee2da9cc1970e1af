"""Scenario runner, metric aggregation, parameter sweeps and trace series."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from statistics import fmean
from typing import Any, Sequence

import numpy as np

from prbi.baselines import random_consensus_step, sequential_split_step
from prbi.core import PrbiConfig, Rounding, initial_state, step
from prbi.detections import DetectionSet, jaccard
from prbi.fleet import AttackModel, FleetOracle, WorldConfig, attackers_for_ratio, prefix_attackers

METHODS = ("prbi", "random_consensus", "sequential_split")
SWEEP_AXES = ("attacker_ratio", "alpha", "window_size", "epsilon", "attack_period", "rounding", "n")
THREADS_ENV = "FLEET_SIM_THREADS"


@dataclass(frozen=True)
class ScenarioConfig:
    world: WorldConfig
    prbi: PrbiConfig = field(default_factory=PrbiConfig)
    frame_count: int = 100
    method: str = "prbi"
    replicates: int = 50

    def __post_init__(self):
        if self.frame_count < 2:
            raise ValueError(f"frame_count must be >= 2, got {self.frame_count}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")

    @property
    def base_seed(self) -> int:
        return self.world.seed


@dataclass(frozen=True)
class FrameLog:
    replicate: int
    frame: int
    flagged: bool
    verifications: int
    m: float
    p_benign: tuple[float, ...]
    converged: bool
    jaccard_truth: float


@dataclass
class ReplicateResult:
    replicate: int
    logs: list[FrameLog]
    verifications: list[int]
    converged: bool
    frames_to_convergence: int | None
    attackers: frozenset
    identified: bool
    misclassified: float


@dataclass(frozen=True)
class ExperimentReport:
    method: str
    n: int
    k: int
    replicates: int
    flagged_frames: int
    total_verifications: int
    count_min: int | None
    count_max: int | None
    count_avg: float | None
    avg_count_min: float | None
    avg_count_max: float | None
    avg_frames: float | None
    id_rate: float | None
    mc_rate: float | None
    converged_rate: float | None
    approximate: bool
    m_trace: tuple[float, ...] = ()

    def row(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("m_trace")
        return d


REPORT_COLUMNS = [f.name for f in fields(ExperimentReport) if f.name != "m_trace"]
FRAME_COLUMNS = [f.name for f in fields(FrameLog)]


def _replicate_world(config: ScenarioConfig, replicate: int) -> WorldConfig:
    return replace(config.world, seed=config.base_seed + replicate)


def _run_prbi(config: ScenarioConfig, replicate: int) -> ReplicateResult:
    world = _replicate_world(config, replicate)
    oracle = FleetOracle(world)
    state = initial_state(world.n)
    logs, verifs = [], []
    flagged_seen = 0
    frames_to_conv = None
    for frame in range(config.frame_count):
        if frame:
            oracle.advance()
        state, out = step(state, frame, oracle, config.prbi)
        if out.flagged:
            flagged_seen += 1
            verifs.append(out.verifications)
        if out.converged_now:
            frames_to_conv = flagged_seen
        logs.append(
            FrameLog(
                replicate,
                frame,
                out.flagged,
                out.verifications,
                state.m,
                state.p_benign,
                state.converged,
                jaccard(out.perception, oracle.benign(), config.prbi.tau_match),
            )
        )
    truth = world.attacker_set
    benign = frozenset(range(world.n)) - truth
    if state.converged:
        identified = truth <= state.attackers
        mc = len(state.attackers & benign) / len(benign)
    else:
        identified, mc = False, 0.0
    return ReplicateResult(replicate, logs, verifs, state.converged, frames_to_conv, state.attackers, identified, mc)


def _run_baseline(config: ScenarioConfig, replicate: int) -> ReplicateResult:
    world = _replicate_world(config, replicate)
    oracle = FleetOracle(world)
    rng = np.random.default_rng([world.seed, 0xBA5E])
    eps, tau = config.prbi.epsilon, config.prbi.tau_match
    fleet = frozenset(range(world.n))
    d_ref: DetectionSet | None = None
    logs, verifs = [], []
    for frame in range(config.frame_count):
        if frame:
            oracle.advance()
        full = oracle.perceive(fleet)
        flagged, cost, out = False, 0, full
        if d_ref is not None and jaccard(full, d_ref, tau) < eps:
            flagged = True
            if config.method == "random_consensus":
                res = random_consensus_step(world.n, oracle, d_ref, eps, rng, tau_match=tau)
            else:
                res = sequential_split_step(world.n, oracle, d_ref, eps, tau_match=tau)
            cost = res.verifications
            out = oracle.perceive(res.collaborators) if res.collaborators else DetectionSet(frame)
            verifs.append(cost)
        if out.boxes or not flagged:
            d_ref = out
        logs.append(
            FrameLog(replicate, frame, flagged, cost, math.nan, (), False, jaccard(out, oracle.benign(), tau))
        )
    return ReplicateResult(replicate, logs, verifs, False, None, frozenset(), False, 0.0)


def run_replicate(config: ScenarioConfig, replicate: int) -> ReplicateResult:
    if config.method == "prbi":
        return _run_prbi(config, replicate)
    return _run_baseline(config, replicate)


def resolve_workers(requested: int | None = None) -> int:
    cap = os.cpu_count() or 1
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return max(1, min(cap, requested if requested else cap))


def _run_all(config: ScenarioConfig, workers: int | None) -> list[ReplicateResult]:
    ids = range(config.replicates)
    workers = min(resolve_workers(workers), config.replicates)
    if workers == 1:
        results = [run_replicate(config, r) for r in ids]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_replicate, [config] * config.replicates, ids))
    return sorted(results, key=lambda r: r.replicate)


def aggregate(config: ScenarioConfig, results: Sequence[ReplicateResult]) -> ExperimentReport:
    """Pool replicate results; independent of the order they arrive in."""
    results = sorted(results, key=lambda r: r.replicate)
    all_counts = [v for r in results for v in r.verifications]
    per_rep = [fmean(r.verifications) for r in results if r.verifications]
    k = config.world.k
    is_prbi = config.method == "prbi"
    converged = [r for r in results if r.converged]
    conv_frames = [r.frames_to_convergence for r in converged if r.frames_to_convergence is not None]

    trace: tuple[float, ...] = ()
    if is_prbi:
        trace = tuple(fmean(r.logs[f].m for r in results) for f in range(config.frame_count))

    return ExperimentReport(
        method=config.method,
        n=config.world.n,
        k=k,
        replicates=len(results),
        flagged_frames=len(all_counts),
        total_verifications=sum(all_counts),
        count_min=min(all_counts) if all_counts else None,
        count_max=max(all_counts) if all_counts else None,
        count_avg=sum(all_counts) / len(all_counts) if all_counts else None,
        avg_count_min=min(per_rep) if per_rep else None,
        avg_count_max=max(per_rep) if per_rep else None,
        avg_frames=fmean(conv_frames) if conv_frames else None,
        id_rate=fmean(r.identified for r in results) if is_prbi and k > 0 else None,
        mc_rate=fmean(r.misclassified for r in converged) if is_prbi and converged else None,
        converged_rate=fmean(r.converged for r in results) if is_prbi else None,
        approximate=not is_prbi,
        m_trace=trace,
    )


def run_scenario(config: ScenarioConfig, workers: int | None = None) -> tuple[list[FrameLog], ExperimentReport]:
    results = _run_all(config, workers)
    logs = [log for r in results for log in r.logs]
    return logs, aggregate(config, results)


def with_axis(base: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    """Copy of ``base`` with one sweep parameter changed."""
    world, prbi = base.world, base.prbi
    if axis == "attacker_ratio":
        world = replace(world, attacker_set=attackers_for_ratio(world.n, float(value)))
    elif axis == "n":
        n = int(value)
        ratio = world.k / world.n
        world = replace(world, n=n, attacker_set=attackers_for_ratio(n, ratio))
    elif axis == "attack_period":
        period = int(value)
        start = world.attack_model.start
        model = AttackModel(start=start) if period == 1 else AttackModel.intermittent(period, start)
        world = replace(world, attack_model=model)
    elif axis == "alpha":
        prbi = replace(prbi, alpha=float(value))
    elif axis == "window_size":
        prbi = replace(prbi, window_size=int(value))
    elif axis == "epsilon":
        prbi = replace(prbi, epsilon=float(value))
    elif axis == "rounding":
        prbi = replace(prbi, grouping_rounding=Rounding(value))
    else:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    return replace(base, world=world, prbi=prbi)


def sweep(axis: str, values: Sequence, base: ScenarioConfig, workers: int | None = None) -> list[ExperimentReport]:
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    return [run_scenario(with_axis(base, axis, v), workers)[1] for v in values]


def _continuous_run(n: int, k: int, rounding: Rounding, frames: int, seed: int):
    world = WorldConfig(n, prefix_attackers(n, k), seed=seed)
    config = PrbiConfig(grouping_rounding=rounding, halt_on_convergence=False)
    oracle = FleetOracle(world)
    state = initial_state(n)
    for frame in range(frames + 1):
        if frame:
            oracle.advance()
        state, _ = step(state, frame, oracle, config)
        if frame:
            yield state


def trace_convergence(n: int, k: int, rounding: Rounding = Rounding.FLOOR, frames: int = 200, seed: int = 0) -> list[float]:
    """Attacker-count estimate after each of ``frames`` frames of a never-halting run."""
    if frames < 1:
        raise ValueError("frames must be >= 1")
    return [s.m for s in _continuous_run(n, k, Rounding(rounding), frames, seed)]


def trace_probabilities(n: int, k: int, frames: int = 100, seed: int = 0) -> list[tuple[float, ...]]:
    """Per-vehicle malicious probability (1 - benign probability) per frame.

    Before any frame has been flagged there is no evidence and every vehicle
    reports 0.
    """
    out = []
    for s in _continuous_run(n, k, Rounding.FLOOR, frames, seed):
        if s.counters.total == 0:
            out.append((0.0,) * n)
        else:
            out.append(tuple(1.0 - p for p in s.p_benign))
    return out


def benign_ratio_trace(n: int, k: int, frames: int = 60, seed: int = 0) -> list[float]:
    """Empirical benign-validation ratio sum(beta) / (n N) per frame under soft sampling."""
    return [s.counters.sum_normal / (n * s.counters.total) for s in _continuous_run(n, k, Rounding.FLOOR, frames, seed)]


def random_split_ratio(n: int, k: int, frames: int, rng: np.random.Generator) -> float:
    """Fraction of all-benign groups when each frame splits the fleet uniformly at random in two."""
    attackers = np.zeros(n, dtype=bool)
    attackers[:k] = True
    clean = 0
    for _ in range(frames):
        side = rng.integers(0, 2, size=n).astype(bool)
        clean += int(not attackers[side].any()) + int(not attackers[~side].any())
    return clean / (2 * frames)


def convergence_frame(series: Sequence[float], k: float, tol: float = 0.5) -> int | None:
    """1-based frame from which |m - k| < tol holds for the rest of the series."""
    last_bad = None
    for i, m in enumerate(series):
        if abs(m - k) >= tol:
            last_bad = i
    if last_bad is None:
        return 1
    if last_bad == len(series) - 1:
        return None
    return last_bad + 2


def halting_frame(n: int, k: int, max_frames: int = 3000, seed: int = 0) -> int | None:
    """Frame at which the detector declares convergence, counted from the first attacked frame."""
    world = WorldConfig(n, prefix_attackers(n, k), seed=seed)
    oracle = FleetOracle(world)
    state = initial_state(n)
    config = PrbiConfig()
    for frame in range(max_frames + 1):
        if frame:
            oracle.advance()
        state, out = step(state, frame, oracle, config)
        if out.converged_now:
            return frame - world.attack_model.start + 1
    return None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    if isinstance(v, (tuple, list)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def _json_value(v):
    if isinstance(v, bool) or v is None:
        return v
    if isinstance(v, float):
        return None if math.isnan(v) else float(f"{v:.6g}")
    if isinstance(v, (tuple, list)):
        return [_json_value(x) for x in v]
    if isinstance(v, frozenset):
        return sorted(v)
    return v


def reports_csv(reports: Sequence[ExperimentReport], axis: str | None = None, values: Sequence | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ([axis] if axis else []) + REPORT_COLUMNS
    writer.writerow(header)
    for i, rep in enumerate(reports):
        row = rep.row()
        lead = [_fmt(values[i])] if axis else []
        writer.writerow(lead + [_fmt(row[c]) for c in REPORT_COLUMNS])
    return buf.getvalue()


def reports_json(reports: Sequence[ExperimentReport], axis: str | None = None, values: Sequence | None = None) -> str:
    out = []
    for i, rep in enumerate(reports):
        d = {c: _json_value(v) for c, v in asdict(rep).items()}
        if axis:
            d = {axis: _json_value(values[i]), **d}
        out.append(d)
    return json.dumps(out if axis else out[0], indent=2)


def frames_csv(logs: Sequence[FrameLog]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FRAME_COLUMNS)
    for log in logs:
        writer.writerow([_fmt(getattr(log, c)) for c in FRAME_COLUMNS])
    return buf.getvalue()


def series_csv(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()
