"""Command-line experiment runner.

Verbs: ``generate`` (write a synthetic dataset CSV + ground-truth sidecar),
``bench-synth`` (the repeated-trial synthetic benchmark), ``bench-real``
(bootstrap evaluation of a feature CSV with ground truth), and ``fit``
(train one model on one dataset).

Configuration is a flat ``key=value`` file with dotted section prefixes
(``generator.n=5000``); every key is also exposed as a CLI flag of the
same dotted name (``--generator.n 5000``), and the common ones have the
short flags ``--seed --trials --jobs --out --models --quantile-rule``.
Precedence: defaults < config file < flags.
"""

from __future__ import annotations

import argparse
import sys

from .estimators import CvConfig, TrainingProtocol
from .models import ModelKind
from .objective import PenaltyNorm
from .optimize import Method, OptimizerConfig
from .runner import (
    ExperimentConfig,
    fit_single,
    generate_dataset,
    run_real_benchmark,
    run_synth_benchmark,
)
from .synth import GeneratorConfig, XDist

__all__ = ["main", "build_config", "parse_config_file", "CONFIG_KEYS"]


def _parse_bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes"):
        return True
    if v.lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _parse_floats(v: str) -> tuple[float, ...]:
    return tuple(float(p) for p in v.split(",") if p.strip() != "")


def _parse_models(v: str) -> tuple[ModelKind, ...]:
    kinds = tuple(ModelKind(p.strip()) for p in v.split(",") if p.strip() != "")
    if not kinds:
        raise ValueError("model list is empty")
    return kinds


# key -> (parser, default).  The resolved mapping is assembled into the
# config dataclasses by build_config.
CONFIG_KEYS: dict = {
    "seed": (int, 0),
    "trials": (int, 500),
    "jobs": (int, 1),
    "out": (str, "results"),
    "models": (_parse_models, "spm,psychm,naive,elkan,real"),
    "quantile_rule": (float, 0.05),
    "resamples": (int, 200),
    "generator.n": (int, 5000),
    "generator.d": (int, 5),
    "generator.rho1": (float, 10.0),
    "generator.rho2": (float, 1.0),
    "generator.k": (float, 5.0),
    "generator.guess": (float, 0.05),
    "generator.lapse": (float, 0.05),
    "generator.x_dist": (XDist, "normal"),
    "cv.folds": (int, 3),
    "cv.grid_sel": (_parse_floats, "0,0.01,0.1,1,10"),
    "cv.grid_tgt": (_parse_floats, "0,0.01,0.1,1,10"),
    "cv.max_iters": (int, 200),  # 0: same budget as the final fit
    "optimizer.method": (str, "auto"),  # auto | adam | nadam | lbfgs
    "optimizer.step_size": (float, 1e-2),
    "optimizer.max_iters": (int, 2000),
    "optimizer.grad_tol": (float, 1e-6),
    "optimizer.history_size": (int, 10),
    "optimizer.moment_decays": (_parse_floats, "0.9,0.999"),
    "reg.norm_sel": (PenaltyNorm, "l2sq"),
    "reg.norm_tgt": (PenaltyNorm, "l2sq"),
    "elkan.holdout_frac": (float, 0.2),
    "psychm.init_guess": (float, 0.7),
    "psychm.init_lapse": (float, 0.02),
    "fit.n_starts": (int, 3),
}

_SHORT_FLAGS = {
    "seed": "--seed",
    "trials": "--trials",
    "jobs": "--jobs",
    "out": "--out",
    "models": "--models",
    "quantile_rule": "--quantile-rule",
}


def parse_config_file(path) -> dict:
    """Flat key=value lines; '#' starts a comment; unknown keys are errors."""
    raw = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
            raw[key] = value
    return raw


def _resolve(raw: dict) -> dict:
    resolved = {}
    for key, (parser, default) in CONFIG_KEYS.items():
        value = raw.get(key, default)
        if isinstance(value, str):
            try:
                value = parser(value)
            except ValueError as exc:
                raise ValueError(f"config key {key}: {exc}") from None
        resolved[key] = value
    return resolved


def build_config(raw: dict) -> ExperimentConfig:
    """Assemble the experiment configuration from a raw key=value mapping."""
    r = _resolve(raw)
    generator = GeneratorConfig(
        n=r["generator.n"],
        d=r["generator.d"],
        rho1=r["generator.rho1"],
        rho2=r["generator.rho2"],
        k=r["generator.k"],
        guess=r["generator.guess"],
        lapse=r["generator.lapse"],
        x_dist=r["generator.x_dist"],
        seed=r["seed"],
    )
    if r["optimizer.method"] == "auto":
        optimizer = None
    else:
        optimizer = OptimizerConfig(
            method=Method(r["optimizer.method"]),
            step_size=r["optimizer.step_size"],
            max_iters=r["optimizer.max_iters"],
            grad_tol=r["optimizer.grad_tol"],
            history_size=r["optimizer.history_size"],
            moment_decays=tuple(r["optimizer.moment_decays"]),
        )
    protocol = TrainingProtocol(
        cv=CvConfig(folds=r["cv.folds"], grid_sel=r["cv.grid_sel"], grid_tgt=r["cv.grid_tgt"]),
        optimizer=optimizer,
        cv_max_iters=r["cv.max_iters"] or None,
        elkan_holdout=r["elkan.holdout_frac"],
        psychm_init=(r["psychm.init_guess"], r["psychm.init_lapse"]),
        n_starts=r["fit.n_starts"],
        norm_sel=r["reg.norm_sel"],
        norm_tgt=r["reg.norm_tgt"],
    )
    return ExperimentConfig(
        generator=generator,
        protocol=protocol,
        models=r["models"],
        trials=r["trials"],
        resamples=r["resamples"],
        quantile_rule=r["quantile_rule"],
        seed=r["seed"],
        jobs=r["jobs"],
        output_dir=r["out"],
    )


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="key=value configuration file")
    for key in CONFIG_KEYS:
        flags = [f"--{key}"]
        if key in _SHORT_FLAGS and _SHORT_FLAGS[key] != f"--{key}":
            flags.append(_SHORT_FLAGS[key])
        sub.add_argument(*flags, dest=key, metavar="V", default=None, help=argparse.SUPPRESS)


def _gather(args: argparse.Namespace) -> dict:
    raw = {}
    if args.config:
        raw.update(parse_config_file(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    return raw


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="puselect",
        description="Positive-unlabeled learning with annotation-process models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write a synthetic dataset CSV + sidecar JSON")
    p_gen.add_argument("output_csv")
    _add_common_flags(p_gen)

    p_synth = sub.add_parser("bench-synth", help="repeated-trial synthetic benchmark")
    _add_common_flags(p_synth)

    p_real = sub.add_parser("bench-real", help="bootstrap benchmark on a dataset CSV with y")
    p_real.add_argument("dataset_csv")
    _add_common_flags(p_real)

    p_fit = sub.add_parser("fit", help="train one model on a dataset CSV")
    p_fit.add_argument("dataset_csv")
    p_fit.add_argument("--model", required=True, help="naive|elkan|spm|psychm|real")
    _add_common_flags(p_fit)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = build_config(_gather(args))
        if args.command == "generate":
            generate_dataset(cfg, args.output_csv)
            print(f"wrote {args.output_csv} and its .json sidecar")
        elif args.command == "bench-synth":
            table = run_synth_benchmark(cfg)
            _print_table(table, cfg)
        elif args.command == "bench-real":
            table = run_real_benchmark(cfg, args.dataset_csv)
            _print_table(table, cfg)
        elif args.command == "fit":
            kind = ModelKind(args.model)
            out_file = f"{cfg.output_dir}/fit_{kind.value}.json"
            fit_single(cfg, args.dataset_csv, kind, out_file)
            print(f"wrote {out_file}")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _print_table(table, cfg: ExperimentConfig) -> None:
    if table.non_converged_fits:
        print(
            f"warning: {table.non_converged_fits} fits stopped at the iteration "
            "cap without reaching the gradient tolerance",
            file=sys.stderr,
        )
    header = ["metric"] + [k.value for k in cfg.models]
    rows = [header]
    for metric, by_model in table.cells.items():
        rows.append([metric] + [f"{by_model[k].mean:.4f}" for k in cfg.models])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    print(f"results written to {cfg.output_dir}/")


if __name__ == "__main__":
    sys.exit(main())
