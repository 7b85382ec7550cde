"""Command-line entry point: ``gaplra --synthetic spec.json --k 3 --p 6 --oracle``."""
import argparse
import json
import os
import sys

from threadpoolctl import threadpool_limits

from .errors import ContractViolation, GapLRAError, MatrixFormatError, NoUsableGap, SolverStalled
from .harness import SWEEP_AXES, SWEEP_COLUMNS, RunConfig, run, sweep
from .io import write_matrix_market
from .solvers import BACKENDS
from .synthetic import SyntheticSpec, plant

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_NO_GAP = 3
EXIT_STALLED = 4

SWEEP_HELP = f"""\
sweep CSV columns: {', '.join(SWEEP_COLUMNS)}.
Axes gap, stable_rank and n benchmark the shifted solver chosen by --backend
on the planted matrix (shift = lambda_1 (1 + gap)); column_samples, epochs and
solver_error (relative D-norm error against a dense solve) are filled in.
Axes epsilon and backend run the full approximation; error, ratio (with
--oracle) and counter columns are filled in. A failed row has status set to
the exception name and the sweep continues.
"""


def build_parser():
    ap = argparse.ArgumentParser(
        prog="gaplra",
        description="Rank-k approximation with adaptive gap-based shift-and-invert preconditioning.",
        epilog=SWEEP_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", metavar="PATH", help="Matrix Market (.mtx/.mm) or dense CSV file")
    src.add_argument("--synthetic", metavar="SPEC.json", help="planted-spectrum recipe (JSON)")
    ap.add_argument("--k", type=int, required=True, help="target rank")
    ap.add_argument("--p", type=int, required=True, help="oversampled block width, k < p < d")
    ap.add_argument("--epsilon", type=float, default=1e-2, help="relative accuracy (default 1e-2)")
    ap.add_argument("--delta", type=float, help="gap budget; searched for when omitted")
    ap.add_argument("--backend", choices=BACKENDS, default="direct", help="shifted solver")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--oracle", action="store_true", help="compare against the exact SVD")
    ap.add_argument("--plain-power-baseline", action="store_true",
                    help="also run unpreconditioned subspace iteration")
    ap.add_argument("--deterministic", action="store_true",
                    help="single-threaded BLAS so repeated runs are bit-identical")
    ap.add_argument("--out", metavar="PATH", help="write the JSON report (or sweep CSV) here")
    ap.add_argument("--sweep", choices=SWEEP_AXES, metavar="AXIS",
                    help=f"sweep one axis: {', '.join(SWEEP_AXES)}")
    ap.add_argument("--values", default=None, help="comma-separated sweep values")
    ap.add_argument("--seeds", type=int, default=1, help="seeds per sweep value")
    ap.add_argument("--solver-gap", type=float, default=0.05,
                    help="relative shift gap for the stable_rank and n solver sweeps")
    ap.add_argument("--solver-tol", type=float, default=1e-8, help="solver accuracy in sweeps")
    ap.add_argument("--write-matrix", metavar="PATH",
                    help="write the planted matrix as Matrix Market plus PATH.spectrum.json")
    return ap


def _config(args):
    synthetic = None
    if args.synthetic:
        with open(args.synthetic) as fh:
            synthetic = json.load(fh)
        SyntheticSpec(**synthetic).spectrum()
    return RunConfig(
        k=args.k, p=args.p, epsilon=args.epsilon, input_path=args.input, synthetic=synthetic,
        delta=args.delta, backend=args.backend, seed=args.seed, oracle=args.oracle,
        plain_power_baseline=args.plain_power_baseline, deterministic=args.deterministic,
        out=args.out, solver_gap=args.solver_gap, solver_tol=args.solver_tol,
    )


def _parse_values(raw, axis):
    if raw is None or not raw.strip():
        return []
    items = [v.strip() for v in raw.split(",") if v.strip()]
    if axis == "backend":
        return items
    return [float(v) for v in items]


def _execute(args):
    cfg = _config(args)
    if args.write_matrix:
        if cfg.synthetic is None:
            raise ContractViolation("--write-matrix needs --synthetic")
        X, _ = plant(SyntheticSpec(**cfg.synthetic), seed=cfg.seed,
                     sidecar=args.write_matrix + ".spectrum.json")
        write_matrix_market(args.write_matrix, X)
        return EXIT_OK
    if args.sweep:
        text = sweep(cfg, args.sweep, _parse_values(args.values, args.sweep), seeds=args.seeds,
                     out=args.out)
        if not args.out:
            sys.stdout.write(text)
        return EXIT_OK
    report = run(cfg)
    if not args.out:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    threads = 1 if args.deterministic else None
    env = os.environ.get("GAPLRA_THREADS")
    if env and threads is None:
        try:
            threads = max(1, int(env))
        except ValueError:
            print(f"gaplra: GAPLRA_THREADS must be an integer, got {env!r}", file=sys.stderr)
            return EXIT_USAGE
    try:
        with threadpool_limits(limits=threads):
            return _execute(args)
    except NoUsableGap as exc:
        print(f"gaplra: no usable gap: {exc}", file=sys.stderr)
        return EXIT_NO_GAP
    except SolverStalled as exc:
        print(f"gaplra: solver stalled: {exc}", file=sys.stderr)
        return EXIT_STALLED
    except (ContractViolation, MatrixFormatError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"gaplra: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GapLRAError as exc:
        print(f"gaplra: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
