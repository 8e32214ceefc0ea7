"""Multi-trial seeded execution, aggregation and persistence.

Trials draw independent Philox streams keyed by (master_seed, trial index),
so results do not depend on execution order or worker count; aggregation is
a fixed-order reduction over trial indices. Reports serialize to JSON with
sorted keys, making repeated runs of the same config byte-identical.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from . import metrics
from ._version import __version__
from .dynamics import DynamicsConfig, NoNoise, TrajectoryRecord, run_trajectory
from .errors import ConfigError, IndeterminateResult, UnsupportedOperation
from .games import GameSpec, builtin_game_specs, make_game

SCHEMA_VERSION = "1.0"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    game: GameSpec
    dynamics: DynamicsConfig
    trials: int = 1
    master_seed: int = 0
    checks: tuple[str, ...] = ()
    game_name: str = ""
    trajectory_dir: Optional[str] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        for cid in self.checks:
            if not metrics.is_known_check(cid):
                raise ConfigError(f"unknown check id {cid!r}")

    def to_dict(self) -> dict:
        game = self.game.to_dict()
        if self.game_name:
            game["name"] = self.game_name
        return {
            "game": game,
            "dynamics": self.dynamics.to_dict(),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "checks": list(self.checks),
            "trajectory_dir": self.trajectory_dir,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        try:
            game_doc = dict(doc["game"])
            dynamics = DynamicsConfig.from_dict(doc["dynamics"])
        except KeyError as exc:
            raise ConfigError(f"experiment config is missing field {exc}") from None
        name = game_doc.pop("name", "")
        if "kind" not in game_doc:
            if not name:
                raise ConfigError("game entry needs either a 'kind' spec or a built-in 'name'")
            specs = builtin_game_specs()
            if name not in specs:
                raise ConfigError(f"unknown built-in game {name!r}; available: {sorted(specs)}")
            spec = specs[name]
        else:
            spec = GameSpec.from_dict(game_doc)
        return ExperimentConfig(
            game=spec,
            dynamics=dynamics,
            trials=int(doc.get("trials", 1)),
            master_seed=int(doc.get("master_seed", 0)),
            checks=tuple(doc.get("checks", ())),
            game_name=name,
            trajectory_dir=doc.get("trajectory_dir"),
        )


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Counter-based stream for one trial, independent of execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=[master_seed, trial])))


def config_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def dyadic_steps(horizon: int) -> list[int]:
    steps = []
    p = 1
    while p <= horizon:
        steps.append(p)
        p *= 2
    if steps[-1] != horizon:
        steps.append(horizon)
    return steps


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class TrialSummary:
    trial: int
    final_gap: Optional[float]
    final_distance: Optional[float]
    diverged: bool
    divergence_step: Optional[int]

    def to_dict(self) -> dict:
        return {"trial": self.trial, "final_gap": self.final_gap,
                "final_distance": self.final_distance, "diverged": self.diverged,
                "divergence_step": self.divergence_step}

    @staticmethod
    def from_dict(doc: dict) -> "TrialSummary":
        return TrialSummary(doc["trial"], doc["final_gap"], doc["final_distance"],
                            doc["diverged"], doc.get("divergence_step"))


@dataclass
class ExperimentReport:
    schema_version: str
    provenance: dict
    config: dict
    trials: list[TrialSummary]
    curve_steps: list[int]
    mean_gap: list[Optional[float]]
    stderr_gap: list[Optional[float]]
    mean_time_avg_gap: list[Optional[float]]
    mean_distance: Optional[list[Optional[float]]]
    fits: dict[str, Optional[dict]]
    checks: list[dict]
    all_diverged: bool

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "provenance": self.provenance,
            "config": self.config,
            "trials": [t.to_dict() for t in self.trials],
            "curves": {
                "steps": self.curve_steps,
                "mean_gap": self.mean_gap,
                "stderr_gap": self.stderr_gap,
                "mean_time_avg_gap": self.mean_time_avg_gap,
                "mean_distance": self.mean_distance,
            },
            "fits": self.fits,
            "checks": self.checks,
            "all_diverged": self.all_diverged,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentReport":
        try:
            version = doc["schema_version"]
            major = int(str(version).split(".")[0])
            if major != int(SCHEMA_VERSION.split(".")[0]):
                raise ConfigError(f"unsupported report schema major version {version!r}")
            curves = doc["curves"]
            return ExperimentReport(
                schema_version=version,
                provenance=doc["provenance"],
                config=doc["config"],
                trials=[TrialSummary.from_dict(t) for t in doc["trials"]],
                curve_steps=curves["steps"],
                mean_gap=curves["mean_gap"],
                stderr_gap=curves["stderr_gap"],
                mean_time_avg_gap=curves["mean_time_avg_gap"],
                mean_distance=curves["mean_distance"],
                fits=doc["fits"],
                checks=doc["checks"],
                all_diverged=doc["all_diverged"],
            )
        except KeyError as exc:
            raise ConfigError(f"report document is missing field {exc}") from None

    def curve(self, name: str) -> list[tuple[float, float]]:
        """Dyadic (step, value) points of a named mean curve, skipping gaps."""
        series = {
            "last_iterate": self.mean_gap,
            "time_average": self.mean_time_avg_gap,
            "distance": self.mean_distance,
        }
        if name not in series or series[name] is None:
            available = [k for k, v in series.items() if v is not None]
            raise ConfigError(f"report has no curve {name!r}; available: {available}")
        return [(float(t), float(v)) for t, v in zip(self.curve_steps, series[name]) if v is not None]

    def failed_checks(self) -> list[dict]:
        return [c for c in self.checks if not c["passed"]]


def write_report(report: ExperimentReport, path: str) -> None:
    text = json.dumps(report.to_dict(), sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def read_report(path: str) -> ExperimentReport:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed report {path}: {exc}") from None
    return ExperimentReport.from_dict(doc)


# ---------------------------------------------------------------------------
# Trajectory persistence (newline-delimited records, header first)
# ---------------------------------------------------------------------------

def write_trajectory(record: TrajectoryRecord, path: str) -> None:
    """Stream one trajectory to disk: a header record, then one line per step."""
    logged = {int(s): i for i, s in enumerate(record.state_steps)}
    with open(path, "w", encoding="utf-8") as fh:
        header = {"type": "header", "game": record.game_name, "config": record.config,
                  "seed": record.seed, "horizon": record.horizon,
                  "diverged": record.diverged, "divergence_step": record.divergence_step}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for t in range(len(record.gap)):
            row: dict[str, Any] = {"t": t, "gap": _json_float(record.gap[t])}
            if t < len(record.eta):
                row["eta"] = _json_float(record.eta[t])
                row["step_norm_sq"] = _json_float(record.step_norm_sq[t])
            if record.beta is not None and t < len(record.beta):
                row["beta"] = _json_float(record.beta[t])
            if t in logged:
                row["x"] = [_json_float(v) for v in record.states[logged[t]]]
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def iter_trajectory(path: str):
    """Yield the parsed header and step records of a trajectory file."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def _json_float(v) -> Optional[float]:
    v = float(v)
    return v if math.isfinite(v) else None


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def _trial_payload(config_doc: dict, trial: int) -> dict:
    """Run one trial and reduce it to the small summary the aggregator needs."""
    config = ExperimentConfig.from_dict(config_doc)
    game = make_game(config.game, name=config.game_name or config.game.kind)
    record = run_trajectory(game, config.dynamics, rng=trial_rng(config.master_seed, trial))

    if config.trajectory_dir:
        os.makedirs(config.trajectory_dir, exist_ok=True)
        write_trajectory(record, os.path.join(config.trajectory_dir, f"trial_{trial:04d}.jsonl"))

    steps = dyadic_steps(config.dynamics.horizon)
    has_oracle = game.nash_oracle is not None
    payload: dict[str, Any] = {
        "trial": trial,
        "final_gap": _json_float(record.gap[-1]),
        "diverged": record.diverged,
        "divergence_step": record.divergence_step,
        "final_distance": None,
        "gap_dyadic": None,
        "tavg_dyadic": None,
        "dist_dyadic": None,
        "verdicts": [],
    }
    if has_oracle and not record.diverged:
        payload["final_distance"] = _json_float(metrics.distance_to_nash(game, record.final_state))
    if not record.diverged:
        idx = np.asarray(steps, dtype=np.int64)
        payload["gap_dyadic"] = record.gap[idx].tolist()
        payload["tavg_dyadic"] = metrics.time_average_gap(record.gap)[idx].tolist()
        if has_oracle:
            pos = np.searchsorted(record.state_steps, idx)  # dyadics are always logged
            proj = np.stack([np.asarray(game.nash_oracle(record.states[p]), dtype=float)
                             for p in pos])
            payload["dist_dyadic"] = np.linalg.norm(record.states[pos] - proj, axis=1).tolist()
    for cid in config.checks:
        name, _ = metrics.parse_check_id(cid)
        if name in metrics.REPORT_CHECKS:
            continue
        try:
            for verdict in metrics.run_check(cid, record, game):
                payload["verdicts"].append({"trial": trial, **verdict.to_dict()})
        except UnsupportedOperation as exc:
            raise ConfigError(f"check {cid!r} does not apply to this configuration: {exc}") from None
    return payload


def _mean_stderr(columns: list[list[float]]) -> tuple[list[Optional[float]], list[Optional[float]]]:
    if not columns:
        return [], []
    arr = np.asarray(columns)  # trials x steps, fixed trial order
    mean = arr.mean(axis=0)
    if arr.shape[0] >= 2:
        stderr = arr.std(axis=0, ddof=1) / math.sqrt(arr.shape[0])
    else:
        stderr = np.zeros(arr.shape[1])
    return [_json_float(v) for v in mean], [_json_float(v) for v in stderr]


def _slope_check_verdict(check_id: str, curves: dict) -> dict:
    """Evaluate 'slope_below:<curve>:<bound>[:Tmin:Tmax]' on a mean curve."""
    parts = check_id.split(":")
    if len(parts) not in (3, 5):
        raise ConfigError(f"malformed slope check {check_id!r}; "
                          "expected slope_below:<curve>:<bound>[:Tmin:Tmax]")
    _, curve_name, bound = parts[:3]
    window = (float(parts[3]), float(parts[4])) if len(parts) == 5 else None
    points = curves.get(curve_name)
    if points is None:
        available = [k for k, v in curves.items() if v is not None]
        raise ConfigError(f"slope check references curve {curve_name!r}, which is not "
                          f"available in this run; available: {available}")
    verdict = metrics.slope_verdict(points, float(bound), check_id, window=window)
    return {"trial": None, **verdict.to_dict()}


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Run all trials, aggregate at dyadic steps, evaluate checks, fit rates."""
    doc = config.to_dict()
    payloads = _run_trials(doc, config.trials, workers)

    steps = dyadic_steps(config.dynamics.horizon)
    summaries = [TrialSummary(p["trial"], p["final_gap"], p["final_distance"],
                              p["diverged"], p["divergence_step"]) for p in payloads]
    live = [p for p in payloads if not p["diverged"]]
    all_diverged = not live

    mean_gap, stderr_gap = _mean_stderr([p["gap_dyadic"] for p in live])
    mean_tavg, _ = _mean_stderr([p["tavg_dyadic"] for p in live])
    has_dist = bool(live) and live[0]["dist_dyadic"] is not None
    mean_dist = _mean_stderr([p["dist_dyadic"] for p in live])[0] if has_dist else None
    if all_diverged:
        mean_gap = stderr_gap = mean_tavg = [None] * len(steps)
        mean_dist = None

    curves = {
        "last_iterate": [(float(t), v) for t, v in zip(steps, mean_gap) if v is not None],
        "time_average": [(float(t), v) for t, v in zip(steps, mean_tavg) if v is not None],
        "distance": ([(float(t), v) for t, v in zip(steps, mean_dist) if v is not None]
                     if mean_dist is not None else None),
    }

    burn = metrics.burnin_count(len(steps))
    fits: dict[str, Optional[dict]] = {}
    for name in ("last_iterate", "time_average"):
        try:
            fits[name] = metrics.fit_rate(curves[name][burn:]).to_dict()
        except IndeterminateResult:
            fits[name] = None
    if not isinstance(config.dynamics.noise, NoNoise):
        budget = metrics.budget_curve(config.dynamics.noise, steps)
        try:
            fits["noise_budget"] = metrics.fit_rate(budget[burn:]).to_dict()
        except IndeterminateResult:
            fits["noise_budget"] = None
    else:
        fits["noise_budget"] = None

    checks: list[dict] = []
    for p in payloads:
        checks.extend(p["verdicts"])
    for cid in config.checks:
        name, _ = metrics.parse_check_id(cid)
        if name == "slope_below":
            checks.append(_slope_check_verdict(cid, curves))

    return ExperimentReport(
        schema_version=SCHEMA_VERSION,
        provenance={"config_hash": config_hash(doc), "master_seed": config.master_seed,
                    "code_version": f"gamegrad {__version__}"},
        config=doc,
        trials=summaries,
        curve_steps=steps,
        mean_gap=mean_gap,
        stderr_gap=stderr_gap,
        mean_time_avg_gap=mean_tavg,
        mean_distance=mean_dist,
        fits=fits,
        checks=checks,
        all_diverged=all_diverged,
    )


def _run_trials(doc: dict, trials: int, workers: int) -> list[dict]:
    if workers <= 1 or trials == 1:
        return [_trial_payload(doc, i) for i in range(trials)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_trial_payload, doc, i) for i in range(trials)]
        return [f.result() for f in futures]  # trial order preserved


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepEntry:
    point: dict
    report: Optional[ExperimentReport]
    error: Optional[str]


def set_by_path(doc: dict, path: str, value) -> None:
    """Assign into a nested config dict by dotted path; the leaf must exist."""
    keys = path.split(".")
    node = doc
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"config has no entry at {path!r} (missing {k!r})")
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(f"config has no entry at {path!r}")
    node[keys[-1]] = value


def sweep(template: dict, grid: dict[str, Sequence], workers: int = 1) -> list[SweepEntry]:
    """One experiment per grid point (cartesian product, axis order preserved)."""
    if not grid:
        raise ConfigError("sweep grid is empty")
    for path, values in grid.items():
        if not isinstance(values, (list, tuple)) or len(values) == 0:
            raise ConfigError(f"sweep axis {path!r} has no values")
        set_by_path(copy.deepcopy(template), path, values[0])  # validates the path

    axes = list(grid.keys())
    entries: list[SweepEntry] = []
    for combo in itertools.product(*(grid[a] for a in axes)):
        point = dict(zip(axes, combo))
        doc = copy.deepcopy(template)
        for path, value in point.items():
            set_by_path(doc, path, value)
        try:
            report = run_experiment(ExperimentConfig.from_dict(doc), workers=workers)
            entries.append(SweepEntry(point=point, report=report, error=None))
        except Exception as exc:  # isolate failures per grid point
            entries.append(SweepEntry(point=point, report=None, error=str(exc)))
    return entries
