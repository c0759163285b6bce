"""Main entry point for roughocp."""
import argparse
import logging
import sys

from config.experiment import parse_config, parse_domain
from config.log import setup_logging
from config.settings import settings
from orchestration.graph import ExperimentOrchestrator

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


def _int_list(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _basis_list(text: str):
    kinds = [v.strip() for v in text.split(",") if v.strip()]
    for kind in kinds:
        if kind not in ("rps", "grps"):
            raise argparse.ArgumentTypeError(f"basis kind must be rps or grps, got '{kind}'")
    return kinds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="roughocp - elliptic optimal control with rough coefficients on RPS/GRPS coarse spaces"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its fields")
    common.add_argument("--coeff", help="trig | raster:<path> | constant:<v> | channel:<kappa>,<n>,<seed>")
    common.add_argument("--domain", help="x0,x1,y0,y1 (default unit square)")
    common.add_argument("--nc", type=_int_list, help="coarse resolutions, e.g. 8,16,32")
    common.add_argument("--refine", type=int, help="refinement depth J of the fine mesh")
    common.add_argument("--fine-resolution", type=int, help="fixed 1/h; J = log2(fine_resolution / Nc)")
    common.add_argument("--layers", type=_int_list, help="localization layers (default ceil(c log2 Nc))")
    common.add_argument("--basis", type=_basis_list, help="rps, grps or rps,grps")
    common.add_argument("--rho", type=float, help=f"step size (default {settings.ocp_rho})")
    common.add_argument("--eps", type=float, help=f"stopping tolerance (default {settings.ocp_eps})")
    common.add_argument("--max-iter", type=int, help=f"iteration cap (default {settings.ocp_max_iter})")
    common.add_argument("--constraint", help="nonneg-mean | box:<a>,<b> | none")
    common.add_argument("--yd", help="sine | zero | constant:<v>")
    common.add_argument("--out", help=f"output directory (default {settings.output_dir})")
    common.add_argument("--log-level", help=f"logging level (default {settings.log_level})")

    subparsers.add_parser("convergence", parents=[common], help="error sweep over Nc, basis kind and layers")
    subparsers.add_parser("decay", parents=[common], help="decay profiles and slices of a central basis function")
    subparsers.add_parser("solve", parents=[common], help="single coarse solve with solution dumps")
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    overrides = {
        "coeff": args.coeff,
        "nc": args.nc,
        "refine": args.refine,
        "fine_resolution": args.fine_resolution,
        "layers": args.layers,
        "basis": args.basis,
        "rho": args.rho,
        "eps": args.eps,
        "max_iter": args.max_iter,
        "constraint": args.constraint,
        "yd": args.yd,
        "output_dir": args.out,
    }
    if args.domain:
        overrides["domain"] = parse_domain(args.domain).as_tuple()
    return overrides


def main(argv=None) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        setup_logging(args.log_level)
        config = parse_config(args.config, overrides_from_args(args))
    except ValueError as exc:
        print(f"Error: invalid configuration\n{exc}")
        return EXIT_CONFIG

    orchestrator = ExperimentOrchestrator(config)
    print(f"\nRunning '{args.command}' for Nc={config.nc}, basis={config.basis}, coeff={config.coeff}")
    print(f"Output directory: {config.output_dir}\n")

    try:
        if args.command == "convergence":
            records = orchestrator.run()
            failures = [r for r in records if r.status != "ok"]

            print("\n" + "=" * 60)
            print("CONVERGENCE SUMMARY")
            print("=" * 60)
            for r in records:
                if r.status == "ok":
                    print(
                        f"Nc={r.nc:<4} {r.kind:<4} l={r.layers:<3} N={r.coarse_dof:<6} "
                        f"combined={r.combined:.4e} iters={r.iterations}"
                    )
                else:
                    print(f"Nc={r.nc:<4} {r.kind:<4} l={r.layers:<3} FAILED: {r.message[:80]}")
            print("=" * 60)
            return EXIT_PARTIAL if failures else EXIT_OK

        if args.command == "decay":
            summary = orchestrator.run_decay()
            print("\n" + "=" * 60)
            print("DECAY SUMMARY")
            print("=" * 60)
            for tag, fit in summary.items():
                print(f"{tag:<16} beta={fit['beta']:.4g}  R^2={fit['r2']:.4f}")
            print("=" * 60)
            return EXIT_OK

        record = orchestrator.run_solve()
        print("\n" + "=" * 60)
        print("SOLVE SUMMARY")
        print("=" * 60)
        print(f"Nc={record.nc} {record.kind} l={record.layers} N={record.coarse_dof}")
        print(f"|y-yH|_1={record.err_y_h1:.4e}  |p-pH|_1={record.err_p_h1:.4e}  |u-uH|={record.err_u:.4e}")
        print(f"iterations={record.iterations} converged={record.converged}")
        print("=" * 60)
        return EXIT_OK

    except KeyboardInterrupt:
        print("\n\nInterrupted by user")
        return EXIT_CONFIG
    except (ValueError, RuntimeError) as exc:
        logger.error(f"Run failed: {exc}")
        print(f"\nError: {exc}")
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
