"""Experiment orchestration: trial loops, aggregation, and result files.

Per-trial seeds are derived from the master seed and the trial index, so
results are identical whatever the degree of parallelism, and aggregation
always walks trials in index order.  Output files embed the resolved
configuration for provenance, and identical configurations reproduce them
byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import partial
from pathlib import Path

import numpy as np

from .data import Dataset, read_csv, split, write_csv
from .estimators import FittedModel, TrainingProtocol, train_model
from .metrics import (
    LOWER_IS_BETTER,
    METRIC_NAMES,
    MetricReport,
    SignificanceMatrix,
    bootstrap_evaluate,
    score_report,
    significance_matrix,
)
from .models import ModelKind, PsychmParams, SpmParams
from .synth import GeneratorConfig, generate

__all__ = [
    "ExperimentConfig",
    "CellStats",
    "ResultTable",
    "run_synth_benchmark",
    "run_real_benchmark",
    "generate_dataset",
    "fit_single",
]

ALL_KINDS = (
    ModelKind.SPM,
    ModelKind.PSYCHM,
    ModelKind.NAIVE,
    ModelKind.ELKAN,
    ModelKind.REAL_ORACLE,
)


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    protocol: TrainingProtocol = field(default_factory=TrainingProtocol)
    models: tuple[ModelKind, ...] = ALL_KINDS
    trials: int = 500
    resamples: int = 200
    quantile_rule: float = 0.05
    seed: int = 0
    jobs: int = 1
    output_dir: str = "results"

    def __post_init__(self):
        if self.trials < 1 or self.resamples < 1 or self.jobs < 1:
            raise ValueError("trials, resamples, and jobs must be >= 1")
        if not self.models:
            raise ValueError("at least one model kind is required")


@dataclass(frozen=True)
class CellStats:
    mean: float
    stderr: float
    count: int


@dataclass(frozen=True)
class ResultTable:
    """Aggregate of per-trial reports: one stats cell per (metric, model)."""

    cells: dict[str, dict[ModelKind, CellStats]]
    significance: dict[str, SignificanceMatrix | None]
    reports: list[MetricReport]
    non_converged_fits: int = 0

    def mean(self, metric: str, model: ModelKind) -> float:
        return self.cells[metric][model].mean

    def as_json_dict(self) -> dict:
        return {
            "results": {
                metric: {
                    kind.value: {
                        "mean": cell.mean,
                        "stderr": cell.stderr,
                        "count": cell.count,
                    }
                    for kind, cell in sorted(by_model.items(), key=lambda kv: kv[0].value)
                }
                for metric, by_model in self.cells.items()
            },
            "significance": {
                metric: None if matrix is None else matrix.as_json_dict()
                for metric, matrix in self.significance.items()
            },
            "non_converged_fits": self.non_converged_fits,
        }


def _derive_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, dtype=np.uint64)[0])


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _params_json(params) -> dict:
    if isinstance(params, PsychmParams):
        return {
            "selection": {"w": params.selection.w.tolist(), "b": params.selection.b},
            "guess": params.guess,
            "lapse": params.lapse,
            "target": {"w": params.target.w.tolist(), "b": params.target.b},
        }
    if isinstance(params, SpmParams):
        return {
            "selection": {"w": params.selection.w.tolist(), "b": params.selection.b},
            "target": {"w": params.target.w.tolist(), "b": params.target.b},
        }
    raise TypeError(f"unsupported params {type(params)}")


def _check_writable(output_dir: str) -> Path:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-probe"
    try:
        probe.write_text("")
    except OSError as exc:
        raise ValueError(f"output directory {out} is not writable: {exc}") from None
    probe.unlink()
    return out


def _aggregate(
    reports: list[MetricReport],
    models: tuple[ModelKind, ...],
    quantile_rule: float,
    non_converged: int,
) -> ResultTable:
    by_model = {kind: [r for r in reports if r.model == kind] for kind in models}
    n_trials = {kind: len(rs) for kind, rs in by_model.items()}
    if len(set(n_trials.values())) != 1:
        raise ValueError("models have unequal trial counts")

    cells: dict[str, dict[ModelKind, CellStats]] = {}
    significance: dict[str, SignificanceMatrix | None] = {}
    for metric in METRIC_NAMES:
        table = {}
        columns = {}
        for kind in models:
            vals = np.array(
                [np.nan if getattr(r, metric) is None else getattr(r, metric) for r in by_model[kind]]
            )
            defined = vals[~np.isnan(vals)]
            mean = float(np.mean(defined)) if defined.size else float("nan")
            stderr = (
                float(np.std(defined, ddof=1) / np.sqrt(defined.size)) if defined.size > 1 else 0.0
            )
            table[kind] = CellStats(mean=mean, stderr=stderr, count=int(defined.size))
            columns[kind] = vals
        cells[metric] = table

        # Significance uses only trials where every model has the metric
        # defined, with lower-is-better metrics negated first.
        stacked = np.vstack([columns[kind] for kind in models])
        complete = ~np.isnan(stacked).any(axis=0)
        if len(models) > 1 and int(complete.sum()) >= 2:
            sign = -1.0 if metric in LOWER_IS_BETTER else 1.0
            matrix_input = {kind: sign * columns[kind][complete] for kind in models}
            significance[metric] = significance_matrix(matrix_input, quantile_rule)
        else:
            significance[metric] = None

    return ResultTable(
        cells=cells, significance=significance, reports=reports, non_converged_fits=non_converged
    )


def _report_rows(reports: list[MetricReport], provenance: str) -> str:
    lines = [f"# {provenance}", "model,trial_id,f1,accuracy,auc,brier"]
    for r in reports:
        auc = "" if r.auc is None else repr(r.auc)
        lines.append(f"{r.model.value},{r.trial_id},{r.f1!r},{r.accuracy!r},{auc},{r.brier!r}")
    return "\n".join(lines) + "\n"


def _write_outputs(out: Path, mode: str, cfg: ExperimentConfig, table: ResultTable, csv_name: str):
    # The embedded provenance covers everything that determines the numbers;
    # jobs and the output location are execution details with no influence
    # on results, and leaving them out keeps reruns byte-identical whatever
    # the parallelism or destination.
    cfg_json = _jsonable(cfg)
    cfg_json.pop("jobs")
    cfg_json.pop("output_dir")
    provenance = json.dumps({"mode": mode, "seed": cfg.seed, "config": cfg_json}, sort_keys=True)
    (out / csv_name).write_text(_report_rows(table.reports, provenance))
    payload = {
        "mode": mode,
        "seed": cfg.seed,
        "config": cfg_json,
        **table.as_json_dict(),
    }
    (out / "aggregate.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _run_synth_trial(cfg: ExperimentConfig, trial_id: int) -> tuple[list[MetricReport], int]:
    gen_cfg = replace(cfg.generator, seed=_derive_seed(cfg.seed, trial_id, 0))
    data = generate(gen_cfg)
    train, test = split(data, 0.5, seed=_derive_seed(cfg.seed, trial_id, 1))
    reports, warn = [], 0
    for k_idx, kind in enumerate(cfg.models):
        model = train_model(train, kind, cfg.protocol, seed=_derive_seed(cfg.seed, trial_id, 2, k_idx))
        warn += 0 if model.diagnostics.converged else 1
        reports.append(score_report(kind, trial_id, model.score(test.x), test.y))
    return reports, warn


def run_synth_benchmark(cfg: ExperimentConfig) -> ResultTable:
    """Fresh generator parameters and data every trial; equal train/test split;
    CV-selected penalties per model; scores on the ground-truth test pairs."""
    out = _check_writable(cfg.output_dir)
    task = partial(_run_synth_trial, cfg)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(task, range(cfg.trials)))
    else:
        outcomes = [task(t) for t in range(cfg.trials)]
    reports = [r for trial_reports, _ in outcomes for r in trial_reports]
    non_converged = sum(w for _, w in outcomes)
    table = _aggregate(reports, cfg.models, cfg.quantile_rule, non_converged)
    _write_outputs(out, "bench-synth", cfg, table, "trials.csv")
    return table


def run_real_benchmark(cfg: ExperimentConfig, dataset_path) -> ResultTable:
    """Bootstrap evaluation of a ground-truthed feature CSV."""
    out = _check_writable(cfg.output_dir)
    data = read_csv(dataset_path)
    if data.y is None:
        raise ValueError(f"{dataset_path}: real benchmark needs a y column")
    reports = bootstrap_evaluate(data, cfg.models, cfg.resamples, cfg.protocol, cfg.seed)
    table = _aggregate(reports, cfg.models, cfg.quantile_rule, 0)
    _write_outputs(out, "bench-real", cfg, table, "resamples.csv")
    return table


def generate_dataset(cfg: ExperimentConfig, out_path) -> Dataset:
    """Write a synthetic dataset CSV plus a sidecar JSON with the ground truth."""
    out_path = Path(out_path)
    data = generate(cfg.generator)
    write_csv(data, out_path)
    sidecar = {
        "config": _jsonable(cfg.generator),
        "seed": cfg.generator.seed,
        "true_params": _params_json(data.true_params),
    }
    out_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return data


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return float("nan")
    return float(u @ v / (nu * nv))


def _model_params_json(model: FittedModel) -> dict:
    out = {"target": {"w": model.target.w.tolist(), "b": model.target.b}}
    if model.selection is not None:
        out["selection"] = {"w": model.selection.w.tolist(), "b": model.selection.b}
    if model.guess is not None:
        out["guess"] = model.guess
        out["lapse"] = model.lapse
    if model.c_hat is not None:
        out["c_hat"] = model.c_hat
    return out


def fit_single(cfg: ExperimentConfig, dataset_path, kind: ModelKind, out_file) -> dict:
    """Train one model on a full dataset CSV and dump parameters + diagnostics.

    If the dataset has a generator sidecar JSON next to it, the report adds
    the cosine similarity between fitted and true target weights.
    """
    dataset_path = Path(dataset_path)
    data = read_csv(dataset_path)
    model = train_model(data, kind, cfg.protocol, seed=cfg.seed)

    training = {"brier_annotation": float(np.mean((model.annotation_probability(data.x) - data.l) ** 2))}
    if data.y is not None:
        rep = score_report(kind, 0, model.score(data.x), data.y)
        training.update({"f1": rep.f1, "accuracy": rep.accuracy, "auc": rep.auc, "brier": rep.brier})

    payload = {
        "mode": "fit",
        "model": kind.value,
        "seed": cfg.seed,
        "config": _jsonable(cfg),
        "params": _model_params_json(model),
        "diagnostics": _jsonable(model.diagnostics),
        "training_metrics": training,
    }

    sidecar = dataset_path.with_suffix(".json")
    if sidecar.exists():
        truth = json.loads(sidecar.read_text())
        true_w = np.asarray(truth["true_params"]["target"]["w"], dtype=float)
        if true_w.size == model.target.w.size:
            payload["recovery"] = {
                "target_weight_cosine": _cosine(model.target.w, true_w),
            }

    out_file = Path(out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    out_file.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return payload
