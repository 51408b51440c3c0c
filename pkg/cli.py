"""Command-line front end: eval | sweep | optimize | reproduce."""

import argparse
import json
import logging
import sys

from config.settings import config
from services.errors import DomainError, EngineError
from services.metrics import Backend, evaluate
from services.models import SOURCE_KINDS, BellState, BinningStrategy
from services.optimizer import CHSH_VARIABLES, Objective, OptimizationProblem, optimize
from services.sweep import (
    SWEEP_VARIABLES,
    context_from_params,
    format_value,
    json_safe,
    reproduce,
    run_sweep,
    spec_from_params,
    write_csv,
    write_csv_file,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] [%(name)s] %(message)s"


def _add_point_arguments(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("source and detectors")
    group.add_argument("--source", choices=SOURCE_KINDS, default="qd", help="Photon-pair source.")
    group.add_argument("--bell", choices=[b.value for b in BellState], default="phi+", help="Ideal Bell state.")
    group.add_argument("--xi", type=float, default=None, help="SPDC squeezing parameter.")
    group.add_argument("--fss", type=float, default=0.0, help="Fine-structure phase in radians.")
    group.add_argument("--p", type=float, default=1.0, help="Survival probability after depolarization.")
    group.add_argument("--eta", type=float, default=1.0, help="Detection efficiency.")
    group.add_argument("--nu", type=float, default=0.0, help="Dark-count parameter.")
    group.add_argument("--binning", choices=[b.value for b in BinningStrategy], default="standard")
    group.add_argument("--angles", default=None, help="a1,a2,b1,b2[,a0] in radians; ideal-Bell optima by default.")
    group.add_argument("--backend", choices=[b.value for b in Backend], default="gaussian", help="Engine for SPDC.")
    group.add_argument("--truncation-tail", type=float, default=None, help="TMSV weight allowed beyond the Fock cutoff.")


def _add_search_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=0, help="Seed of the random optimizer starts.")
    parser.add_argument("--budget", type=int, default=None, help="Maximal objective evaluations.")
    parser.add_argument("--grid-points", type=int, default=None, help="Coarse-grid points per free variable.")
    parser.add_argument("--starts", type=int, default=None, help="Refinements started from the best grid points.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkd-feasibility",
        description="Bell parameters, QBERs and key rates of entangled photon-pair sources.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default="WARNING")
    commands = parser.add_subparsers(dest="command", required=True)

    eval_parser = commands.add_parser("eval", help="Evaluate one configuration.")
    _add_point_arguments(eval_parser)
    eval_parser.add_argument("--json", action="store_true", help="Print the full report as JSON.")
    eval_parser.set_defaults(handler=cmd_eval)

    sweep_parser = commands.add_parser("sweep", help="Sweep one parameter and write CSV.")
    sweep_parser.add_argument("variable", choices=SWEEP_VARIABLES)
    sweep_parser.add_argument("--from", dest="start", type=float, required=True)
    sweep_parser.add_argument("--to", dest="stop", type=float, required=True)
    sweep_parser.add_argument("--steps", type=int, required=True)
    sweep_parser.add_argument("--output", default="-", help="CSV path, - for stdout.")
    sweep_parser.add_argument("--workers", type=int, default=None)
    _add_point_arguments(sweep_parser)
    sweep_parser.set_defaults(handler=cmd_sweep)

    optimize_parser = commands.add_parser("optimize", help="Maximize the Bell parameter or the DI key rate.")
    _add_point_arguments(optimize_parser)
    _add_search_arguments(optimize_parser)
    optimize_parser.add_argument("--free", default=",".join(CHSH_VARIABLES), help="Comma list of free variables.")
    optimize_parser.add_argument("--objective", choices=[o.value for o in Objective], default="bell")
    optimize_parser.add_argument("--json", action="store_true")
    optimize_parser.set_defaults(handler=cmd_optimize)

    reproduce_parser = commands.add_parser("reproduce", help="Write the CSV data of figure 2, 3, 4 or 5.")
    reproduce_parser.add_argument("figure", type=int)
    reproduce_parser.add_argument("--outdir", default=".")
    reproduce_parser.add_argument("--from", dest="start", type=float, default=None)
    reproduce_parser.add_argument("--to", dest="stop", type=float, default=None)
    reproduce_parser.add_argument("--steps", type=int, default=None)
    reproduce_parser.add_argument("--workers", type=int, default=None)
    _add_search_arguments(reproduce_parser)
    reproduce_parser.set_defaults(handler=cmd_reproduce)
    return parser


def _engine_config(args):
    return config.replace(
        truncation_tail=getattr(args, "truncation_tail", None),
        grid_points=getattr(args, "grid_points", None),
        refine_starts=getattr(args, "starts", None),
        sweep_workers=getattr(args, "workers", None),
    )


def cmd_eval(args) -> int:
    source, detector, plan, strategy, backend = context_from_params(vars(args))
    report = evaluate(source, detector, plan, strategy, backend, args.truncation_tail)
    if args.json:
        print(json.dumps(json_safe(report.to_dict()), indent=2))
        return 0
    for label, value in (
        ("S", report.bell_s),
        ("Q_DI", report.qber_di),
        ("Q_BB84", report.qber_bb84),
        ("r_DI", report.rate_di.rate),
        ("r_BB84", report.rate_bb84.rate),
    ):
        print(f"{label} = {format_value(value)}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _engine_config(args)
    spec = spec_from_params(vars(args))
    rows = run_sweep(spec, args.workers, cfg)
    data = [row.as_tuple() for row in rows]
    if args.output == "-":
        write_csv(sys.stdout, spec.header(), spec.columns(), data, cfg)
    else:
        write_csv_file(args.output, spec.header(), spec.columns(), data, cfg)
    return 0


def cmd_optimize(args) -> int:
    cfg = _engine_config(args)
    free = tuple(name.strip() for name in args.free.split(",") if name.strip())
    params = vars(args)
    if args.source == "spdc" and args.xi is None and "xi" in free:
        params = {**params, "xi": sum(cfg.xi_bounds) / 2}
    source, detector, plan, strategy, backend = context_from_params(params)
    problem = OptimizationProblem(
        source=source,
        detector=detector,
        strategy=strategy,
        objective=Objective(args.objective),
        free_variables=free,
        base_plan=plan,
        backend=backend,
        tail=args.truncation_tail,
    )
    result = optimize(problem, seed=args.seed, budget=args.budget, config=cfg)
    if args.json:
        print(json.dumps(result.to_dict(), indent=2))
        return 0
    print(f"best = {format_value(result.best_value)}")
    for name, value in result.argmax.items():
        print(f"{name} = {format_value(value)}")
    print(f"evaluations = {result.evaluations}")
    print(f"converged = {str(result.converged).lower()}")
    return 0


def _axis(args, default: tuple):
    if args.start is None and args.stop is None and args.steps is None:
        return None
    given = (args.start, args.stop, args.steps)
    return tuple(d if g is None else g for g, d in zip(given, default))


def cmd_reproduce(args) -> int:
    cfg = _engine_config(args)
    default = cfg.xi_range if args.figure == 2 else cfg.eta_range
    axis = _axis(args, default)
    paths = reproduce(
        args.figure,
        args.outdir,
        workers=args.workers,
        seed=args.seed,
        budget=args.budget,
        config=cfg,
        xi_range=axis if args.figure == 2 else None,
        eta_range=None if args.figure == 2 else axis,
    )
    for path in paths:
        print(path)
    return 0


def main(argv=None) -> int:
    """
    Runs one command.

    Returns:
        int: 0 on success, 1 on domain or runtime errors; usage errors exit with 2 inside argparse
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr)
    try:
        return args.handler(args)
    except DomainError as e:
        logger.debug("Domain error in %s", args.command, exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (EngineError, OSError) as e:
        logger.error("Command %s failed: %s", args.command, e, exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
