"""Desk-scale experiment harness on the toy driving task.

Every cell runs calibrate -> outlier profile -> allocate -> prune -> score and
is a pure function of its configuration. Method presets:

=========  ==========  ==============  ============
name       importance  allocation      calibration
=========  ==========  ==============  ============
dense      --          --              --
magnitude  MAGNITUDE   UNIFORM         --
wanda      WANDA       UNIFORM         SCENARIO
owl        WANDA       OWLED_LM_ONLY   GENERIC
owled      WANDA       OWLED_LM_ONLY   SCENARIO
=========  ==========  ==============  ============
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .allocation import allocate_scoped, match_budget
from .archive import load_model
from .calibration import LIGHT_STATES, SAMPLE_COUNTS, Regime, collect_norms, evaluation_scenes, generate
from .config import (
    DEFAULT_LIMIT,
    DEFAULT_SAMPLES,
    SPARSITY_GRID,
    Allocation,
    Comparison,
    Method,
    PruningConfig,
)
from .errors import PruningError, StructuralError
from .graph import ModelGraph, predict
from .outliers import DEFAULT_THRESHOLD, compute_lod
from .pruning import prune_model

N_EVAL = 1000
EVAL_SEED = 0
DEFAULT_SEEDS = tuple(range(20))
METRICS = ("mae_car", "mae_ped", "acc_light", "mae_steer", "mse")
HEAD_WIDTH = 3 + len(LIGHT_STATES)


@dataclass(frozen=True)
class Preset:
    method: Method | None
    allocation: Allocation | None
    regime: Regime | None


PRESETS = {
    "dense": Preset(None, None, None),
    "magnitude": Preset(Method.MAGNITUDE, Allocation.UNIFORM, None),
    "wanda": Preset(Method.WANDA, Allocation.UNIFORM, Regime.SCENARIO),
    "owl": Preset(Method.WANDA, Allocation.OWLED_LM_ONLY, Regime.GENERIC),
    "owled": Preset(Method.WANDA, Allocation.OWLED_LM_ONLY, Regime.SCENARIO),
}
SWEEP_METHODS = ("magnitude", "wanda", "owl", "owled")


def fixture_path():
    return resources.files("owlprune").joinpath("data/fixture.lodt")


def load_fixture() -> ModelGraph:
    with resources.as_file(fixture_path()) as path:
        return load_model(path)


@dataclass(frozen=True, eq=False)
class ToyTask:
    """Frozen model plus a held-out evaluation set with ground truth."""

    graph: ModelGraph
    X: np.ndarray
    car_count: np.ndarray
    ped_count: np.ndarray
    light_state: np.ndarray
    steering: np.ndarray
    dense_outputs: np.ndarray

    @property
    def majority_light_rate(self) -> float:
        return float(np.bincount(self.light_state).max() / self.light_state.size)


def load_task(graph=None, n_eval=N_EVAL, eval_seed=EVAL_SEED) -> ToyTask:
    graph = load_fixture() if graph is None else graph
    X, targets = evaluation_scenes(n_eval, eval_seed)
    if graph.output_dim != HEAD_WIDTH or graph.input_dim != X.shape[1]:
        raise StructuralError(
            f"model maps {graph.input_dim} -> {graph.output_dim}, task needs "
            f"{X.shape[1]} -> {HEAD_WIDTH}"
        )
    return ToyTask(
        graph,
        X,
        targets.car_count,
        targets.ped_count,
        targets.light_state,
        targets.steering,
        predict(graph, X),
    )


def score(g: ModelGraph, task: ToyTask) -> dict:
    """Head metrics on the eval set plus output MSE against the dense model.

    Light-state ties resolve to the lowest class index.
    """
    if g.input_dim != task.X.shape[1] or g.output_dim != HEAD_WIDTH:
        raise StructuralError(f"model output width {g.output_dim} does not match the task heads")
    out = predict(g, task.X)
    return {
        "mae_car": float(np.mean(np.abs(out[:, 0] - task.car_count))),
        "mae_ped": float(np.mean(np.abs(out[:, 1] - task.ped_count))),
        "acc_light": float(np.mean(np.argmax(out[:, 2:5], axis=1) == task.light_state)),
        "mae_steer": float(np.mean(np.abs(out[:, 5] - task.steering))),
        "mse": float(np.mean((out - task.dense_outputs) ** 2)),
    }


@dataclass(frozen=True)
class Cell:
    method: str
    sparsity: float = 0.0
    seed: int = 0
    n_samples: int = DEFAULT_SAMPLES
    limit: float = DEFAULT_LIMIT
    threshold: float = DEFAULT_THRESHOLD
    comparison: Comparison = Comparison.PER_ROW

    @property
    def preset(self) -> Preset:
        try:
            return PRESETS[self.method]
        except KeyError:
            raise PruningError(f"unknown method preset {self.method!r}") from None


def _base_row(experiment, cell, allocation, regime):
    return {
        "experiment": experiment,
        "method": cell.method,
        "allocation": allocation,
        "regime": regime,
        "sparsity": cell.sparsity,
        "n_samples": cell.n_samples if regime != "-" else 0,
        "seed": cell.seed,
        "limit": cell.limit,
        "threshold": cell.threshold,
        "status": "ok",
        "pruned": 0,
        "coefficient": 0.0,
    }


def run_cell(task: ToyTask, cell: Cell, experiment="sweep") -> dict:
    preset = cell.preset
    row = _base_row(
        experiment,
        cell,
        preset.allocation.name if preset.allocation is not None else "-",
        preset.regime.name if preset.regime is not None else "-",
    )
    try:
        if preset.method is None:
            pruned = task.graph
        else:
            cfg = PruningConfig(
                cell.sparsity,
                limit=min(cell.limit, cell.sparsity, 1.0 - cell.sparsity),
                threshold=cell.threshold,
                method=preset.method,
                allocation=preset.allocation,
                comparison=cell.comparison,
                seed=cell.seed,
            )
            trace = None
            if preset.regime is not None:
                trace = collect_norms(task.graph, generate(preset.regime, cell.n_samples, cell.seed))
            plan = allocate_scoped(task.graph, trace, cfg)
            pruned, report = prune_model(task.graph, plan, cfg.method, trace, cfg.comparison)
            row["pruned"] = report.total_pruned
        row.update(score(pruned, task))
    except (PruningError, ArithmeticError) as exc:
        row["status"] = f"failed: {exc}"
    return row


@dataclass
class ExperimentResult:
    name: str
    rows: list
    group_keys: tuple = ("method", "allocation", "regime", "sparsity", "n_samples")
    notes: list = field(default_factory=list)
    budget_gap: int | None = None

    def ok_rows(self):
        return [r for r in self.rows if r["status"] == "ok"]

    def aggregate(self):
        """Mean, std and normal-approximation 95% CI half-width per group."""
        groups = {}
        for row in self.ok_rows():
            groups.setdefault(tuple(row[k] for k in self.group_keys), []).append(row)
        out = []
        for key, rows in groups.items():
            agg = dict(zip(self.group_keys, key))
            agg["seeds"] = len(rows)
            for metric in METRICS:
                values = [r[metric] for r in rows]
                mean = math.fsum(values) / len(values)
                std = statistics.stdev(values) if len(values) > 1 else 0.0
                agg[f"{metric}_mean"] = mean
                agg[f"{metric}_std"] = std
                agg[f"{metric}_ci95"] = 1.96 * std / math.sqrt(len(values))
            out.append(agg)
        return out

    def mean(self, metric="mse", **where):
        rows = [r for r in self.ok_rows() if all(r[k] == v for k, v in where.items())]
        if not rows:
            raise KeyError(f"no rows match {where}")
        return math.fsum(r[metric] for r in rows) / len(rows)

    def values(self, metric="mse", **where):
        return [r[metric] for r in self.ok_rows() if all(r[k] == v for k, v in where.items())]

    def to_csv(self, rows=None) -> str:
        rows = self.rows if rows is None else rows
        if not rows:
            return ""
        columns = list(rows[0])
        for row in rows[1:]:
            columns.extend(k for k in row if k not in columns)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
        return buf.getvalue()

    def summary_csv(self) -> str:
        return self.to_csv(self.aggregate())

    def summary_text(self) -> str:
        lines = [f"experiment: {self.name}", f"cells: {len(self.rows)} ({len(self.ok_rows())} ok)"]
        failed = [r for r in self.rows if r["status"] != "ok"]
        for r in failed:
            lines.append(f"FAILED {r['method']} S={r['sparsity']} seed={r['seed']}: {r['status']}")
        lines.extend(self.notes)
        by_level = {}
        for agg in self.aggregate():
            level = tuple((k, agg[k]) for k in self.group_keys if k not in ("method", "allocation", "regime"))
            by_level.setdefault(level, []).append(agg)
        for level, aggs in by_level.items():
            label = " ".join(f"{k}={_fmt(v)}" for k, v in level)
            lines.append("")
            lines.append(f"[{label}] ranked by mean end-to-end MSE")
            for rank, agg in enumerate(sorted(aggs, key=lambda a: (a["mse_mean"], a["method"], a["allocation"])), 1):
                lines.append(
                    f"  {rank}. {agg['method']:<10} {agg['allocation']:<15} mse={agg['mse_mean']:.6g}"
                    f" +/- {agg['mse_ci95']:.3g}  mae_car={agg['mae_car_mean']:.4f}"
                    f"  acc_light={agg['acc_light_mean']:.4f}  mae_steer={agg['mae_steer_mean']:.4f}"
                )
        return "\n".join(lines) + "\n"

    def write(self, directory):
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "cells": directory / f"{self.name}_cells.csv",
            "summary": directory / f"{self.name}_summary.csv",
            "report": directory / f"{self.name}_report.txt",
        }
        paths["cells"].write_text(self.to_csv(), encoding="utf-8")
        paths["summary"].write_text(self.summary_csv(), encoding="utf-8")
        paths["report"].write_text(self.summary_text(), encoding="utf-8")
        return paths


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def run_sweep(
    task: ToyTask,
    methods=SWEEP_METHODS,
    sparsities=SPARSITY_GRID,
    seeds=DEFAULT_SEEDS,
    n_samples=DEFAULT_SAMPLES,
    limit=DEFAULT_LIMIT,
    threshold=DEFAULT_THRESHOLD,
    comparison=Comparison.PER_ROW,
    include_dense=True,
) -> ExperimentResult:
    rows = []
    for seed in seeds:
        if include_dense:
            rows.append(run_cell(task, Cell("dense", 0.0, seed, n_samples, limit, threshold, comparison)))
        for method in methods:
            for s in sparsities:
                rows.append(run_cell(task, Cell(method, s, seed, n_samples, limit, threshold, comparison)))
    return ExperimentResult("sweep", rows)


SCOPES = (Allocation.OWLED_LM_ONLY, Allocation.OWLED_SEPARATE, Allocation.OWLED_GLOBAL)


def run_scope_ablation(
    task: ToyTask,
    sparsities=(0.3, 0.4),
    seeds=DEFAULT_SEEDS,
    n_samples=DEFAULT_SAMPLES,
    limit=DEFAULT_LIMIT,
    threshold=DEFAULT_THRESHOLD,
    comparison=Comparison.PER_ROW,
) -> ExperimentResult:
    """The three allocation scopes at equal pruned-parameter budget.

    The LM-only plan sets the budget; the other two are rescaled to it.
    """
    g = task.graph
    rows, worst_gap = [], 0
    for s in sparsities:
        for seed in seeds:
            trace = collect_norms(g, generate(Regime.SCENARIO, n_samples, seed))
            base = PruningConfig(s, limit, threshold, Method.WANDA, Allocation.OWLED_LM_ONLY, comparison, seed=seed)
            reference = allocate_scoped(g, trace, base)
            totals = []
            for scope in SCOPES:
                cell = Cell("owled", s, seed, n_samples, limit, threshold, comparison)
                row = _base_row("scope", cell, scope.name, Regime.SCENARIO.name)
                try:
                    if scope is Allocation.OWLED_LM_ONLY:
                        plan = reference
                        row["coefficient"] = 1.0
                    else:
                        plan = match_budget(reference, base.replace(allocation=scope), g, trace)
                        row["coefficient"] = plan.budget_coefficient
                    pruned, report = prune_model(g, plan, Method.WANDA, trace, comparison)
                    row["pruned"] = report.total_pruned
                    row["encoder_sparsity"] = report.component_sparsity("ENCODER")
                    totals.append(report.total_pruned)
                    row.update(score(pruned, task))
                except (PruningError, ArithmeticError) as exc:
                    row["status"] = f"failed: {exc}"
                rows.append(row)
            if totals:
                worst_gap = max(worst_gap, max(totals) - min(totals))
    result = ExperimentResult("scope", rows, budget_gap=worst_gap)
    result.notes.append(
        f"budget equality: max pruned-count gap across scopes = {worst_gap} "
        f"(allowed {len(g)}) -> {'OK' if worst_gap <= len(g) else 'VIOLATED'}"
    )
    return result


def run_calibration_ablation(
    task: ToyTask,
    sample_counts=SAMPLE_COUNTS,
    sparsity=0.4,
    seeds=DEFAULT_SEEDS,
    limit=DEFAULT_LIMIT,
    threshold=DEFAULT_THRESHOLD,
    comparison=Comparison.PER_ROW,
) -> ExperimentResult:
    rows = [
        run_cell(task, Cell("owled", sparsity, seed, n, limit, threshold, comparison), "calib")
        for n in sample_counts
        for seed in seeds
    ]
    return ExperimentResult("calib", rows)


def lod_for(task_or_graph, regime, n_samples, seed, threshold=DEFAULT_THRESHOLD, scope=None):
    """Outlier profile of the fixture (or a given graph) under one calibration draw."""
    g = task_or_graph.graph if isinstance(task_or_graph, ToyTask) else task_or_graph
    trace = collect_norms(g, generate(regime, n_samples, seed))
    return compute_lod(g, trace, threshold, scope)
