"""Command line interface for the feature exporter."""
from __future__ import annotations

import argparse
import sys

from .errors import ExportError
from .export import ExportJob, export, export_grid
from .models import make_demo


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feature-export",
        description="Run classifiers over image datasets and write feature bundles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_export = sub.add_parser("export", help="export one bundle directory")
    _job_flags(p_export)
    p_export.add_argument("--recipe", default="none", help="corruption, e.g. gaussian_noise:3")
    p_export.add_argument("--id", default=None, help="override the bundle id")

    p_grid = sub.add_parser("grid", help="export one bundle per recipe")
    _job_flags(p_grid)
    p_grid.add_argument(
        "--recipes",
        required=True,
        help="comma-separated recipes, e.g. none,gaussian_noise:2,contrast:4",
    )

    p_demo = sub.add_parser("demo", help="write a small synthetic dataset + checkpoint")
    p_demo.add_argument("--data", required=True, help="dataset .npz to create")
    p_demo.add_argument("--model", required=True, help="checkpoint .npz to create")
    p_demo.add_argument("--classes", type=int, default=4)
    p_demo.add_argument("--side", type=int, default=16)
    p_demo.add_argument("--n", type=int, default=600)
    p_demo.add_argument("--seed", type=int, default=0)
    return parser


def _job_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True, help="checkpoint .npz path")
    parser.add_argument("--data", required=True, help="dataset .npz path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--batch-size", type=int, default=256)
    parser.add_argument("--device", default="cpu")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export":
            job = ExportJob(
                model=args.model,
                data=args.data,
                out_dir=args.out,
                recipe=args.recipe,
                batch_size=args.batch_size,
                device=args.device,
                bundle_id=args.id,
            )
            res = export(job)
            print(f"wrote {res.out_dir}: id={res.bundle_id} n={res.n} d={res.d} accuracy={res.accuracy:.4f}")
        elif args.command == "grid":
            base = ExportJob(
                model=args.model,
                data=args.data,
                out_dir=args.out,
                batch_size=args.batch_size,
                device=args.device,
            )
            recipes = [r.strip() for r in args.recipes.split(",") if r.strip()]
            results = export_grid(base, recipes, args.out)
            for res in results:
                print(f"wrote {res.out_dir}: id={res.bundle_id} accuracy={res.accuracy:.4f}")
            print(f"{len(results)} bundles under {args.out}")
        else:
            make_demo(
                args.data,
                args.model,
                classes=args.classes,
                side=args.side,
                n=args.n,
                seed=args.seed,
            )
            print(f"wrote demo dataset {args.data} and checkpoint {args.model}")
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
