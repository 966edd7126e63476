"""Command-line front end.

Subcommands:
  prep               corpus TSV -> vocabulary dump + encoded train/test files
  train-baseline     static-data logistic regression, evaluated per period
  train-bilevel      adversary-aware cells only (no baseline rows)
  sweep              full cell grid plus baseline rows
  plot-generator     smoothed-step curve families as CSV
  plot-nonconvexity  follower-objective surface as CSV
  report             join metrics CSVs into a per-period comparison table

Flags mirror the experiment config keys; a `--config` file provides defaults
that individual flags override.  Exit codes: 0 success, 2 bad configuration,
3 bad data, 4 every solver cell stalled.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .corpus import write_encoded, write_vocabulary
from .experiment import (
    ConfigError,
    DataError,
    ExperimentConfig,
    build_config,
    generator_curve_rows,
    load_pipeline,
    nonconvexity_surface_rows,
    parse_config_text,
    report_table,
    run_baseline_cells,
    run_sweep,
    write_metrics_csv,
    write_rows_csv,
    write_sweep_outputs,
    write_weights,
)

_CONFIG_FLAGS = [
    ("corpus", str), ("q_target", int), ("train_size", int), ("count_mode", str),
    ("stopwords", str), ("adversarial_class", int), ("rho", str), ("mu", str),
    ("alpha0", float), ("zeta0", str), ("beta0_size", int), ("beta0_restarts", int),
    ("epsilon", float), ("max_iter", int), ("eta0", float), ("kappa", int),
    ("tau", float), ("baseline_max_iter", int), ("baseline_grad_tol", float),
]


def _add_config_flags(parser: argparse.ArgumentParser, seed_required: bool) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    for key, typ in _CONFIG_FLAGS:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ)
    parser.add_argument("--seed", type=int, required=seed_required)
    parser.add_argument("--outdir", required=True, help="output directory")


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    mapping = {}
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        mapping.update(parse_config_text(text))
    for key, _ in _CONFIG_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = str(value)
    if getattr(args, "seed", None) is not None:
        mapping["seed"] = str(args.seed)
    return build_config(mapping)


def _cmd_prep(args) -> int:
    config = _resolve_config(args)
    pipeline = load_pipeline(config)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_vocabulary(pipeline.vocab, outdir / "vocabulary.txt")
    write_encoded(pipeline.train, outdir / "train.txt")
    for period, ds in pipeline.tests.items():
        write_encoded(ds, outdir / f"test_{period}.txt")
    return 0


def _cmd_train_baseline(args) -> int:
    config = _resolve_config(args)
    pipeline = load_pipeline(config)
    result = run_baseline_cells(config, pipeline)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(result.metrics, outdir / "metrics.csv")
    for cell_id, w in result.baseline_weights.items():
        write_weights(w, outdir / f"weights_{cell_id}.txt")
    return 0


def _run_cells(args, include_baseline: bool) -> int:
    config = _resolve_config(args)
    result = run_sweep(config, include_baseline=include_baseline)
    write_sweep_outputs(result, Path(args.outdir))
    return 4 if result.all_cells_stalled() else 0


def _cmd_plot_generator(args) -> int:
    kwargs = {}
    if args.alphas:
        kwargs["alphas"] = tuple(float(v) for v in args.alphas.split(","))
    if args.betas:
        kwargs["betas"] = tuple(float(v) for v in args.betas.split(","))
    if args.grid_points:
        kwargs["n_grid"] = args.grid_points
    header, rows = generator_curve_rows(**kwargs)
    write_rows_csv(header, rows, args.output)
    return 0


def _cmd_plot_nonconvexity(args) -> int:
    header, rows = nonconvexity_surface_rows()
    write_rows_csv(header, rows, args.output)
    return 0


def _cmd_report(args) -> int:
    header, lines = report_table(args.metrics)
    text = header + "\n" + "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advbilevel",
                                     description="adversary-anticipating classifier training")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="encode a corpus into train/test matrices")
    _add_config_flags(p, seed_required=False)
    p.set_defaults(func=_cmd_prep)

    p = sub.add_parser("train-baseline", help="train the no-adversary control")
    _add_config_flags(p, seed_required=True)
    p.set_defaults(func=_cmd_train_baseline)

    p = sub.add_parser("train-bilevel", help="solve adversary-aware cells")
    _add_config_flags(p, seed_required=True)
    p.set_defaults(func=lambda a: _run_cells(a, include_baseline=False))

    p = sub.add_parser("sweep", help="full cell grid plus baseline")
    _add_config_flags(p, seed_required=True)
    p.set_defaults(func=lambda a: _run_cells(a, include_baseline=True))

    p = sub.add_parser("plot-generator", help="smoothed-step curve family CSV")
    p.add_argument("--output", required=True)
    p.add_argument("--alphas", help="comma-separated slope values")
    p.add_argument("--betas", help="comma-separated threshold values")
    p.add_argument("--grid-points", type=int, dest="grid_points")
    p.set_defaults(func=_cmd_plot_generator)

    p = sub.add_parser("plot-nonconvexity", help="follower objective surface CSV")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_plot_nonconvexity)

    p = sub.add_parser("report", help="per-period comparison of metrics CSVs")
    p.add_argument("metrics", nargs="+", help="metrics CSV files to join")
    p.add_argument("--output", help="write the table here instead of stdout")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
