"""Command line interface for sstsim."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, NoReturn, Optional

from .core import SimulationRequest, SstToolkit, write_report
from .errors import PatternViolation, SstSimError, VerificationFailure
from .reference import PlatformOverrides
from .sparse_format import Precision, SparsityLevel

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFICATION = 2

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration error code."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _level(text: str) -> SparsityLevel:
    try:
        return SparsityLevel.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _precision(text: str) -> Precision:
    try:
        return Precision.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def configure_logging(verbose: bool = False, log_file: Optional[str] = None) -> None:
    """Attach a stderr handler (and optionally a file) to the sstsim logger."""
    logger = logging.getLogger("sstsim")
    logger.handlers.clear()
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)
    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file, mode="a")
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="sstsim",
        description="sstsim: Sparse systolic tensor slice simulator and estimator",
    )
    parser.add_argument("--data-dir", default="data", help="Data directory path")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--log-file", help="Append log messages to this file")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # Simulate one GEMM
    sim_parser = subparsers.add_parser(
        "sim", help="Run a GEMM on the cycle simulator and check it"
    )
    sim_parser.add_argument("--Y", type=_positive_int, default=1, help="Slice rows")
    sim_parser.add_argument("--X", type=_positive_int, default=1, help="Slice columns")
    sim_parser.add_argument(
        "--level", type=_level, default=SparsityLevel.DENSE, help="dense, 2:4, 1:3, 1:4"
    )
    sim_parser.add_argument(
        "--precision", type=_precision, default=Precision.INT8, help="int8 or bfloat16"
    )
    sim_parser.add_argument("--M", type=_positive_int, default=4)
    sim_parser.add_argument("--K", type=_positive_int, default=16)
    sim_parser.add_argument("--N", type=_positive_int, default=4)
    sim_parser.add_argument("--seed", type=int, default=0)
    sim_parser.add_argument(
        "--identity", action="store_true", help="Multiply B by a K×K identity"
    )
    sim_parser.add_argument("--problem", type=Path, help="Problem descriptor JSON")
    sim_parser.add_argument(
        "--a-file", type=Path, help="Matrix file for A (B is generated)"
    )
    sim_parser.add_argument(
        "--depth", type=_positive_int, default=512, help="Bank depth in words"
    )
    sim_parser.add_argument(
        "--dense-baseline",
        action="store_true",
        help="Run on a dense-only fabric with zeros materialized",
    )
    sim_parser.add_argument(
        "--no-auto-pad", action="store_true", help="Reject misaligned dimensions"
    )
    sim_parser.add_argument("--trace", type=Path, help="Write a per-cycle trace CSV")
    sim_parser.add_argument("--report", type=Path, help="Report output path")
    sim_parser.add_argument("--format", choices=["json", "csv"], default="json")

    # Network estimate
    estimate_parser = subparsers.add_parser(
        "estimate", help="Estimate a network against the dense baseline"
    )
    estimate_parser.add_argument(
        "network", help="Network descriptor path or shipped network name"
    )
    estimate_parser.add_argument(
        "--uniform", type=_level, help="Set every sparsifiable layer to this level"
    )
    estimate_parser.add_argument("--Y", type=_positive_int)
    estimate_parser.add_argument("--X", type=_positive_int)
    estimate_parser.add_argument(
        "--dram-bw", type=_positive_float, help="DRAM bandwidth in bytes/s"
    )
    estimate_parser.add_argument(
        "--freq", type=_positive_float, help="SST clock in Hz"
    )
    estimate_parser.add_argument(
        "--baseline-freq", type=_positive_float, help="Baseline clock in Hz"
    )
    estimate_parser.add_argument(
        "--serial", action="store_true", help="Add memory time to compute time"
    )
    estimate_parser.add_argument("--report", type=Path, help="Report output path")
    estimate_parser.add_argument("--format", choices=["json", "csv"], default="json")

    # Pruning
    prune_parser = subparsers.add_parser(
        "prune", help="Magnitude-prune a matrix to an N:M pattern"
    )
    prune_parser.add_argument("input", type=Path, help="Matrix file")
    prune_parser.add_argument("--level", type=_level, required=True)
    prune_parser.add_argument("--output", type=Path, required=True)
    prune_parser.add_argument("--stats", type=Path, help="Write statistics JSON")

    # Oracle suite
    verify_parser = subparsers.add_parser(
        "verify", help="Check random problems against the reference GEMM"
    )
    verify_parser.add_argument("--count", type=_positive_int, default=200)
    verify_parser.add_argument("--seed", type=int, default=0)
    verify_parser.add_argument("--workers", type=_positive_int, help="Worker threads")
    verify_parser.add_argument("--report", type=Path, help="Report output path")
    verify_parser.add_argument("--format", choices=["json", "csv"], default="csv")

    # Reference tables
    tables_parser = subparsers.add_parser(
        "tables", help="Compare computed values with the published ones"
    )
    tables_parser.add_argument("--report", type=Path, help="Report output path")
    tables_parser.add_argument("--format", choices=["json", "csv"], default="csv")
    tables_parser.add_argument(
        "--skip-simulation",
        action="store_true",
        help="Leave out rows that need the cycle simulator",
    )

    return parser


def _cmd_sim(toolkit: SstToolkit, args: argparse.Namespace) -> int:
    request = SimulationRequest(
        Y=args.Y,
        X=args.X,
        level=args.level,
        precision=args.precision,
        M=args.M,
        K=args.K,
        N=args.N,
        seed=args.seed,
        identity=args.identity,
        problem_file=args.problem,
        a_file=args.a_file,
        depth=args.depth,
        dense_baseline=args.dense_baseline,
        auto_pad=not args.no_auto_pad,
        trace_file=args.trace,
    )
    report = toolkit.simulate(request)
    s = report.summary
    print(
        f"{s['M']}×{s['K']}×{s['N']} {s['level']} {s['precision']} "
        f"on {s['Y']}×{s['X']} slices"
    )
    print(f"  Cycles: {s['cycles']}")
    print(f"  Steady-state cycles per tile: {s['steady_state_cycles_per_tile']}")
    print(f"  Utilization: {s['utilization']:.3f}")
    print(f"  BRAMs: {s['bram_counts']['total']}")
    print(f"  Checksum of C: {s['checksum_of_C']}")
    print(f"  Oracle: {'pass' if report.passed else 'FAIL'}")
    if args.report:
        data = report.to_dict()
        if args.format == "csv":
            brams = data.pop("bram_counts")
            data.update({f"brams_{k}": v for k, v in brams.items()})
        write_report(data, args.report, args.format)
    if not report.passed:
        raise VerificationFailure(f"{s['mismatches']} entries differ from the oracle")
    return EXIT_OK


def _cmd_estimate(toolkit: SstToolkit, args: argparse.Namespace) -> int:
    spec = toolkit.networks.get(args.network)
    overrides = PlatformOverrides(
        Y=args.Y, X=args.X, dram_bw=args.dram_bw, overlap=not args.serial
    )
    if args.freq is not None:
        overrides.frequency_hz[spec.precision] = args.freq
    estimate, frame = toolkit.estimate(
        args.network, args.uniform, overrides, args.baseline_freq
    )
    print(f"Network: {estimate.network.name} ({estimate.network.precision.value})")
    print(f"  Layers: {estimate.network.layer_count()}")
    for level, count in estimate.network.level_counts().items():
        print(f"    {level}: {count}")
    print(f"  Time: {estimate.total_time_s * 1e3:.3f} ms")
    print(f"  Baseline time: {estimate.baseline_time_s * 1e3:.3f} ms")
    print(f"  Speedup: {estimate.speedup:.2f}x")
    print(f"  Weight reduction: {estimate.weight_reduction:.2f}x")
    if args.report:
        write_report(
            toolkit.estimate_report(estimate, frame, args.format),
            args.report,
            args.format,
        )
    return EXIT_OK


def _cmd_prune(toolkit: SstToolkit, args: argparse.Namespace) -> int:
    stats = toolkit.prune(args.input, args.level, args.output)
    print(f"Pruned {stats['rows']}×{stats['cols']} matrix to {stats['level']}")
    print(f"  Zero fraction: {stats['zero_fraction']:.4f}")
    print(f"  Compressed bytes: {stats['compressed_bytes']:.1f}")
    print(f"  Compression ratio: {stats['compression_ratio']:.4f}")
    if args.stats:
        write_report(stats, args.stats, "json")
    return EXIT_OK


def _cmd_verify(toolkit: SstToolkit, args: argparse.Namespace) -> int:
    results, frame = toolkit.verify(args.count, args.seed, args.workers)
    failed = [r for r in results if not r.passed]
    print(f"Oracle cases: {len(results)}, failed: {len(failed)}")
    for result in failed[:10]:
        c = result.case
        detail = result.error or f"{result.mismatches} mismatches"
        print(
            f"  case {c.index}: {c.Y}×{c.X} {c.level.value} {c.precision.value} "
            f"{c.M}×{c.K}×{c.N}: {detail}"
        )
    if args.report:
        write_report(frame, args.report, args.format)
    if failed:
        raise VerificationFailure(f"{len(failed)} oracle cases failed")
    return EXIT_OK


def _cmd_tables(toolkit: SstToolkit, args: argparse.Namespace) -> int:
    frame, failed = toolkit.tables(args.skip_simulation)
    for table, rows in frame.groupby("table", sort=False):
        print(f"{table}:")
        for row in rows.to_dict(orient="records"):
            status = "pass" if row["pass"] else ("FAIL" if row["gating"] else "off")
            print(
                f"  {row['metric']}: {row['computed']:.4f} vs "
                f"{row['published']:.4f} [{status}]"
            )
    if args.report:
        write_report(frame, args.report, args.format)
    if not failed.empty:
        raise VerificationFailure(f"{len(failed)} reference cells out of tolerance")
    return EXIT_OK


COMMANDS = {
    "sim": _cmd_sim,
    "estimate": _cmd_estimate,
    "prune": _cmd_prune,
    "verify": _cmd_verify,
    "tables": _cmd_tables,
}


def run(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, dispatch, and map errors to exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG

    configure_logging(args.verbose, args.log_file)
    toolkit = SstToolkit(args.data_dir)
    try:
        return COMMANDS[args.command](toolkit, args)
    except (PatternViolation, VerificationFailure) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_VERIFICATION
    except (SstSimError, FileNotFoundError, ValueError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    """Main entry point for the sstsim CLI."""
    sys.exit(run())


if __name__ == "__main__":
    main()
