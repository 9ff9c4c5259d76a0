"""Command line entry point.

Subcommands mirror the pipeline stages: gen, table, train, predict,
evaluate, fuse, report.  A JSON config file may supply every setting;
flags override it; the AUTOEVAL_SEED env var overrides the seed last.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import Optional

from .errors import AutoevalError
from . import pipeline


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (RunConfig fields)")
    p.add_argument("--reference-bundle", help="path to the reference bundle directory")
    p.add_argument(
        "--training-bundle",
        action="append",
        dest="training_bundles",
        metavar="DIR",
        help="training bundle directory (repeatable)",
    )
    p.add_argument(
        "--eval-bundle",
        action="append",
        dest="eval_bundles",
        metavar="DIR",
        help="evaluation bundle directory (repeatable)",
    )
    p.add_argument("--methods", help="comma-separated method list")
    p.add_argument("--regressor", choices=pipeline.REGRESSOR_CHOICES)
    p.add_argument("--k-clusters", type=int, dest="k_clusters")
    p.add_argument(
        "--signature-mode",
        choices=("centers_gaussian", "matched_percluster"),
        dest="signature_mode",
    )
    p.add_argument(
        "--signature-features", choices=("global", "full"), dest="signature_features"
    )
    p.add_argument("--seed", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument(
        "--omfd-selection", choices=("validation", "eval"), dest="omfd_selection"
    )
    p.add_argument(
        "--centroid",
        dest="fixed_centroid",
        help="comma-separated explicit centroid vector for fusion",
    )
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--jobs", type=int)


def _config_from_args(args: argparse.Namespace) -> pipeline.RunConfig:
    doc = pipeline.load_config_file(args.config) if args.config else {}
    overrides = {}
    for key in pipeline._CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if overrides.get("methods") is not None and isinstance(overrides["methods"], str):
        overrides["methods"] = [m.strip() for m in overrides["methods"].split(",") if m.strip()]
    if overrides.get("fixed_centroid") is not None and isinstance(
        overrides["fixed_centroid"], str
    ):
        overrides["fixed_centroid"] = [
            float(x) for x in overrides["fixed_centroid"].split(",")
        ]
    return pipeline.build_config(doc, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autoeval",
        description="Predict classifier accuracy on unlabeled sets from feature statistics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic shift grid of bundles")
    p_gen.add_argument("--grid", required=True, help="grid spec JSON file")
    p_gen.add_argument("--out", required=True, help="output directory for bundles")

    for name, help_text in (
        ("table", "build and persist per-method training tables"),
        ("train", "build tables, fit regressors, persist models"),
        ("predict", "predict eval bundles, fuse, and write reports"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)

    p_eval = sub.add_parser("evaluate", help="RMSE per track plus pooled residuals")
    p_eval.add_argument("csvs", nargs="+", help="predictions.csv files, one per track")
    p_eval.add_argument("--out", help="write the evaluation table here instead of stdout")

    p_fuse = sub.add_parser("fuse", help="re-run fusion over an existing predictions.csv")
    _add_config_flags(p_fuse)

    p_report = sub.add_parser("report", help="print the artifacts of an output directory")
    p_report.add_argument("--output-dir", dest="output_dir", default="autoeval_out")

    return parser


def _cmd_gen(args) -> int:
    grid = pipeline.load_grid_file(args.grid)
    written = pipeline.run_gen(grid, args.out)
    print(f"wrote {len(written)} bundles under {args.out}")
    return 0


def _cmd_table(args) -> int:
    cfg = _config_from_args(args)
    tables = pipeline.build_training_tables(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    for method, table in tables.items():
        path = os.path.join(cfg.output_dir, f"training_table_{method}.csv")
        pipeline.write_table_csv(table, path)
        print(f"{method}: {table.n} rows -> {path}")
    return 0


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    report = pipeline.run_train(cfg)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_predict(args) -> int:
    cfg = _config_from_args(args)
    result, fusion = pipeline.run_predict(cfg)
    print(f"wrote {os.path.join(cfg.output_dir, 'predictions.csv')}")
    if result.rmse_pct:
        for method, val in result.rmse_pct.items():
            print(f"rmse[{method}] = {val:.4f} pct")
    if fusion is not None and fusion.removed:
        names = ", ".join(m for m, _ in fusion.removed)
        print(f"fusion removed: {names}")
    return 0


def _cmd_evaluate(args) -> int:
    rows = pipeline.evaluate_tracks(args.csvs)
    out = sys.stdout
    close = False
    if args.out:
        out = open(args.out, "w", encoding="utf-8", newline="")
        close = True
    try:
        out.write(pipeline.SUMMARY_CSV_VERSION + "\n")
        w = csv.writer(out)
        w.writerow(["track", "method", "rmse_pct"])
        for track, method, val in rows:
            w.writerow([track, method, format(val, ".6f")])
    finally:
        if close:
            out.close()
    return 0


def _cmd_fuse(args) -> int:
    cfg = _config_from_args(args)
    report = pipeline.run_fuse(cfg)
    survivors = ", ".join(report.survivors)
    print(f"survivors: {survivors}")
    for method, dist in report.removed:
        print(f"removed {method} (distance {dist:.3f})")
    return 0


def _cmd_report(args) -> int:
    out_dir = args.output_dir
    any_found = False
    for name in ("train_report.json", "ensemble_report.json"):
        path = os.path.join(out_dir, name)
        if os.path.exists(path):
            any_found = True
            print(f"== {name} ==")
            with open(path, "r", encoding="utf-8") as fh:
                print(fh.read().rstrip())
    for name in ("summary.csv", "predictions.csv"):
        path = os.path.join(out_dir, name)
        if os.path.exists(path):
            any_found = True
            print(f"== {name} ==")
            with open(path, "r", encoding="utf-8") as fh:
                print(fh.read().rstrip())
    if not any_found:
        print(f"no artifacts found under {out_dir}", file=sys.stderr)
        return 1
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "table": _cmd_table,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "fuse": _cmd_fuse,
    "report": _cmd_report,
}


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (AutoevalError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
