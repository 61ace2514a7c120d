"""Command line entry point: ``rwnn-pde <experiment> [options]``.

Emits a versioned JSON document (or CSV rows) per run; solver failures exit
nonzero with a machine-readable error document instead of a traceback.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    SCHEMA_VERSION,
    result_to_csv,
    run_experiment,
    scaling_table,
)


def _parse_nodes(text: str):
    parts = [p for p in text.split(",") if p]
    values = tuple(int(p) for p in parts)
    return values[0] if len(values) == 1 else values


def _parse_dims(text: str):
    return tuple(int(p) for p in text.split(",") if p)


def _on_off(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("on", "true", "1", "yes"):
        return True
    if lowered in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on|off, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rwnn-pde",
        description="Backward random-feature regression pricing experiments",
    )
    parser.add_argument(
        "experiment",
        choices=list(EXPERIMENTS) + ["bs-scaling"],
        help="experiment id (bs-scaling runs the dimension table)",
    )
    parser.add_argument("--nodes", type=_parse_nodes, default=None,
                        help="hidden nodes K, or comma list for sweeps")
    parser.add_argument("--paths", type=int, default=50_000, help="Monte-Carlo sample count")
    parser.add_argument("--steps", type=int, default=21, help="time discretization steps")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--ridge", type=float, default=None,
                        help="ridge strength (default: scale-aware)")
    parser.add_argument("--connectivity", type=float, default=None,
                        help="fraction of nonzero reservoir weights")
    parser.add_argument("--range", dest="weight_range", type=float, default=1.0,
                        help="reservoir weight range R")
    parser.add_argument("--absorption", type=_on_off, default=None,
                        help="clamp value estimates at zero (on|off)")
    parser.add_argument("--repeats", type=int, default=20, help="sweep repetitions")
    parser.add_argument("--dimension", type=int, default=5, help="asset count for bs-calls")
    parser.add_argument("--dims", type=_parse_dims, default=(5, 10, 25, 50, 100),
                        help="dimension list for bs-scaling")
    parser.add_argument("--reference-paths", type=int, default=None,
                        help="override the reference-run path count")
    parser.add_argument("--reference-steps", type=int, default=100,
                        help="reference-run time steps")
    parser.add_argument("--iid", action="store_true",
                        help="disable antithetic path pairing")
    parser.add_argument("--out", type=str, default=None, help="output file (default stdout)")
    parser.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json")
    parser.add_argument("--dump-weights", type=str, default=None,
                        help="write fitted reservoir/readout weights as JSON")
    parser.add_argument("--dump-paths", type=str, default=None,
                        help="write the solver path batch as columnar CSV")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.experiment == "bs-scaling":
            config = ExperimentConfig(
                experiment="bs-calls",
                steps=args.steps,
                paths=args.paths,
                nodes=args.nodes,
                connectivity=args.connectivity,
                weight_range=args.weight_range,
                ridge=args.ridge,
                absorption=args.absorption,
                seed=args.seed,
                antithetic=not args.iid,
            )
            rows = scaling_table(args.dims, config)
            if args.fmt == "csv":
                buffer = io.StringIO()
                writer = csv.writer(buffer)
                writer.writerow(["dimension", "total_mse", "wall_time"])
                for d, mse, wall in rows:
                    writer.writerow([d, repr(mse), repr(wall)])
                _emit(buffer.getvalue(), args.out)
            else:
                doc = {
                    "schema": SCHEMA_VERSION,
                    "experiment": "bs-scaling",
                    "seed": args.seed,
                    "rows": [
                        {"dimension": d, "total_mse": mse, "wall_time": wall}
                        for d, mse, wall in rows
                    ],
                }
                _emit(json.dumps(doc, indent=2, sort_keys=True), args.out)
            return 0
        config = ExperimentConfig(
            experiment=args.experiment,
            steps=args.steps,
            paths=args.paths,
            nodes=args.nodes,
            connectivity=args.connectivity,
            weight_range=args.weight_range,
            ridge=args.ridge,
            absorption=args.absorption,
            seed=args.seed,
            repeats=args.repeats,
            dimension=args.dimension,
            reference_paths=args.reference_paths,
            reference_steps=args.reference_steps,
            antithetic=not args.iid,
            dump_weights=args.dump_weights,
            dump_paths=args.dump_paths,
        )
        doc = run_experiment(config)
    except Exception as exc:  # solver/config failures become error documents
        error_doc = {
            "schema": SCHEMA_VERSION,
            "error": {"type": type(exc).__name__, "message": str(exc)},
        }
        _emit(json.dumps(error_doc, indent=2, sort_keys=True), args.out)
        return 1
    if args.fmt == "csv":
        _emit(result_to_csv(doc), args.out)
    else:
        _emit(json.dumps(doc, indent=2, sort_keys=True), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
