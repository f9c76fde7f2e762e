import datetime
import sys
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Any, Dict, List, Optional

sys.path[0:0] = ["."]

from src.asymptotics import pivotal_sigma2, weight_square_integral
from src.bootstrap import run_test
from src.context import Context
from src.kernel_smoothing import KERNELS, KernelSpec, kernel_constants
from src.read_sample import read_sample
from src.simulations import run_study
from src.user_errors import InputError, InvalidArgumentError, NumericalError
from src.user_types import MODEL_KINDS, MULTIPLIERS, RunManifest, WeightFunction
from src.write_report import format_summary, format_test_report, write_manifest, write_rejection_table, write_test_report

VERSION = "0.1.0"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    args = cli_arguments(argv)
    try:
        context = Context(Path(args.out_dir), args.config, overrides(args))
    except InputError as e:
        print(f"Invalid input: {e}", file=sys.stderr)
        return EXIT_INPUT
    logger = context.logger
    print_ = context.print_
    logger.create_new_log_file()
    logger.info("Starting the program.")
    logger.info(f"Effective configuration: {context.config} (digest {context.digest()}).")
    started = _now()
    try:
        outputs = COMMANDS[args.command](context, args)
    except InputError as e:
        print_.abort(str(e))
        return EXIT_INPUT
    except NumericalError as e:
        print_.fail(f"{type(e).__name__}: {e}")
        return EXIT_NUMERICAL
    logger.info("Writing the manifest.")
    manifest = RunManifest(
        command=" ".join(["elgof", *argv]),
        config_digest=context.digest(),
        seed=context.config["seed"],
        version=VERSION,
        started=started,
        finished=_now(),
        outputs=tuple(str(path) for path in outputs),
    )
    write_manifest(manifest, context.workspace)
    logger.info("Exiting the program.")
    return EXIT_OK


def _now() -> str:
    return datetime.datetime.now().isoformat(timespec="seconds")


def cmd_test(context: Context, args: Namespace) -> List[Path]:
    logger = context.logger
    print_ = context.print_
    logger.info(f"Reading the data from '{args.data}'.")
    sample = read_sample(Path(args.data))
    logger.info(f"Reading the data done: n={sample.n}, d={sample.d}, k={sample.k}.")
    config = context.test_config()
    logger.info(f"Running the test of the {args.model} null.")
    outcome = run_test(sample, args.model, config)
    logger.info("Running the test done.")
    logger.info("Writing the report.")
    outputs = write_test_report(outcome, context.workspace, Path(args.data).stem, config.alpha)
    print_(format_test_report(outcome, config.alpha))
    if outcome.reject:
        print_.success(f"The {args.model} null is rejected at level {config.alpha} (p = {outcome.p_value:.4g}).")
    else:
        print_.success(f"The {args.model} null is not rejected at level {config.alpha} (p = {outcome.p_value:.4g}).")
    return outputs


def cmd_simulate(context: Context, args: Namespace) -> List[Path]:
    logger = context.logger
    print_ = context.print_
    study = context.study_config()
    logger.info(f"Running the study '{study.name}'.")
    table = run_study(study)
    logger.info("Running the study done.")
    outputs = write_rejection_table(table, context.workspace, study.name)
    print_(format_summary(table))
    print_.success(f"Rejection table written to '{outputs[0]}'.")
    return outputs


def cmd_constants(context: Context, args: Namespace) -> List[Path]:
    print_ = context.print_
    config = context.config
    if args.k < 1:
        raise InvalidArgumentError(f"The number of response curves must be at least 1, got {args.k}.")
    spec = KernelSpec.named(config["kernel"])
    constants = kernel_constants(spec, args.d)
    pi = WeightFunction.box(config["pi_lo"], config["pi_hi"], args.d, config["normalize_pi"])
    print_(f"kernel\t{spec.base} (order {spec.order})")
    print_(f"d\t{args.d}")
    print_(f"k\t{args.k}")
    print_(f"R_K\t{constants.R_K:.15g}")
    print_(f"K4_0\t{constants.K4_0:.15g}")
    print_(f"k_r\t{constants.k_r:.15g}")
    print_(f"int_pi2\t{weight_square_integral(pi):.15g}")
    print_(f"sigma2\t{pivotal_sigma2(spec, args.d, args.k, pi):.15g}")
    return []


COMMANDS = {"test": cmd_test, "simulate": cmd_simulate, "constants": cmd_constants}


def overrides(args: Namespace) -> Dict[str, Any]:
    """Configuration values given on the command line; absent flags map to None."""
    result = {
        key: getattr(args, key, None)
        for key in ("alpha", "boot", "seed", "h_grid", "workers", "pi_lo", "pi_hi", "b", "d1", "kernel", "multiplier", "reps")
    }
    for key in ("h0", "h1"):
        value = getattr(args, key, None)
        result[key] = None if value is None else (value,)
    if getattr(args, "no_normalize_pi", False):
        result["normalize_pi"] = False
    if getattr(args, "full_scale", False):
        (result["reps"], result["boot"]) = (300, 300)
    return result


def cli_arguments(argv: List[str]) -> Namespace:
    """
    CLI argument parser.

    Returns:
        The parsed arguments. Flags left out are None, so that they do not override the
        configuration file.
    """
    parser = ArgumentParser(
        prog="elgof",
        description="Empirical likelihood goodness-of-fit tests for multiresponse regression.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    common = ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="a key = value configuration file")
    common.add_argument("--out-dir", default="elgof_output", help="folder for reports, manifest and log")
    common.add_argument("--kernel", choices=list(KERNELS), help="base kernel (default: triangular)")
    common.add_argument("--pi-lo", type=float, help="lower corner of the weight function box")
    common.add_argument("--pi-hi", type=float, help="upper corner of the weight function box")
    common.add_argument("--no-normalize-pi", action="store_true", help="use the raw indicator as weight function")

    run = ArgumentParser(add_help=False)
    run.add_argument("--alpha", type=float, help="significance level")
    run.add_argument("--boot", type=int, help="number of bootstrap replicates")
    run.add_argument("--multiplier", choices=MULTIPLIERS, help="wild bootstrap multiplier law")
    run.add_argument("--seed", type=int, help="master random seed")
    run.add_argument("--h-grid", type=int, help="number of bandwidths on [h0, h1]")
    run.add_argument("--workers", type=int, help="parallel workers (-1: all cores)")

    test = commands.add_parser("test", parents=[common, run], help="test a null model on a data file")
    test.add_argument("--data", required=True, help="CSV file with columns x1..xd and y1..yk")
    test.add_argument("--model", required=True, choices=MODEL_KINDS, help="null model")
    test.add_argument("--h0", type=float, help="smallest baseline bandwidth")
    test.add_argument("--h1", type=float, help="largest baseline bandwidth")
    test.add_argument("--b", type=float, help="nuisance bandwidth (default: cross-validation)")
    test.add_argument("--d1", type=int, help="covariates kept by the variable selection null")

    simulate = commands.add_parser("simulate", parents=[common, run], help="run a Monte Carlo study")
    simulate.add_argument("--reps", type=int, help="Monte Carlo repetitions per cell")
    simulate.add_argument("--full-scale", action="store_true", help="300 repetitions of 300 replicates")

    constants = commands.add_parser("constants", parents=[common], help="print kernel and asymptotic constants")
    constants.add_argument("--d", type=int, default=1, help="covariate dimension")
    constants.add_argument("--k", type=int, default=1, help="number of response curves")

    return parser.parse_args(argv)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
