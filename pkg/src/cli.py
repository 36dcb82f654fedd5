"""
Command-line front end.

    python -m src.cli converge --beta 1 --nu 0.3 --N 8,16,32,64
    python -m src.cli precond --beta 2 --dt 1e-2 --nu 0.499
    python -m src.cli check
    python -m src.cli solve --N 16 --beta 2 --dt 0.125 --out steps.csv

Exit codes: 0 pass, 1 assertion failure, 2 solver failure, 64 usage error.
"""
from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

from src.analysis import convergence_study, diagnostics, preconditioning_study
from src.analysis.errors import compute_errors
from src.analysis.timestepping import build_problem, run_transient
from src.utils.config import COMMAND_DEFAULTS, DEFAULT_SEED, RESULTS_ENV, RunConfig, load_config
from src.utils.exceptions import BiotError, ConfigurationError, ElementConstructionError, SolverError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_SOLVER = 2
EXIT_USAGE = 64

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise ConfigurationError(f"{self.prog}: {message}")


def _defaults(command: str, key: str, fallback: str) -> str:
    value = COMMAND_DEFAULTS[command].get(key)
    if value is None:
        return fallback
    if not value:
        return "1/N"
    return ",".join(f"{v:g}" for v in value)


def _add_common(sub: argparse.ArgumentParser, command: str) -> None:
    defaults = RunConfig()
    sub.add_argument("--config", type=Path, help="TOML file with flat keys named like the flags")
    sub.add_argument("--N", help=f"mesh sizes, comma-separated (default {_defaults(command, 'N', '')})")
    sub.add_argument("--beta", help=f"over-stabilization exponents (default {_defaults(command, 'beta', '')})")
    sub.add_argument("--nu", help=f"Poisson ratios (default {_defaults(command, 'nu', '')})")
    sub.add_argument("--dt", help=f"time steps (default {_defaults(command, 'dt', '')})")
    sub.add_argument("--gamma", help="penalty parameters (default 10)")
    sub.add_argument("--C1", help="stabilization weights (default 1)")
    sub.add_argument("--E", type=float, help=f"Young modulus (default {defaults.E:g})")
    sub.add_argument("--alpha", type=float, help=f"Biot-Willis coefficient (default {defaults.alpha:g})")
    sub.add_argument("--s0", type=float, help=f"specific storage (default {defaults.s0:g})")
    sub.add_argument("--kappa", help="conductivity: scalar or k11,k12,k21,k22 (default 1)")
    sub.add_argument("--T", type=float, help=f"final time (default {defaults.T:g})")
    sub.add_argument("--rtol", type=float, help=f"MinRes relative tolerance (default {defaults.rtol:g})")
    sub.add_argument("--maxit", type=int, help=f"MinRes iteration limit (default {defaults.maxit})")
    sub.add_argument(
        "--out", type=Path,
        help=f"output directory, or the per-step CSV for solve (default ${RESULTS_ENV} or results/tables)",
    )
    sub.add_argument("--seed", type=int, help=f"seed of randomized checks (default {DEFAULT_SEED})")
    sub.add_argument("--log-level", dest="log_level", help="logging level (default INFO)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="biot", description="Biot poroelasticity solver and studies.")
    subparsers = parser.add_subparsers(dest="command", required=True)

    converge = subparsers.add_parser("converge", help="manufactured-solution convergence study")
    _add_common(converge, "converge")

    precond = subparsers.add_parser("precond", help="MinRes iteration counts")
    _add_common(precond, "precond")
    precond.add_argument("--steps", type=int, help="time steps per configuration (default 10)")

    check = subparsers.add_parser("check", help="structural and inf-sup diagnostics")
    _add_common(check, "check")

    solve = subparsers.add_parser("solve", help="single transient run")
    _add_common(solve, "solve")
    solve.add_argument(
        "--initial-pressure", dest="initial_pressure", choices=["elliptic", "l2"],
        help="initial pressure projection (default elliptic)",
    )
    solve.add_argument("--gamma-d", dest="gamma_d", help="clamped boundary sides (default left)")
    solve.add_argument("--gamma-p", dest="gamma_p", help="pressure boundary sides (default boundary)")
    return parser


def cmd_converge(config: RunConfig) -> int:
    template = config.params()
    diagnostics.sample_coercivity(template, seed=config.seed)
    table = convergence_study.convergence_study(
        template,
        config.N,
        config.beta,
        config.nu,
        gamma_list=config.gamma,
        C1_list=config.C1,
        rtol=config.rtol,
        maxit=config.maxit,
        dt=config.dt[0] if config.dt else None,
    )
    convergence_study.write_tables(table, config.output_dir())
    violations = convergence_study.rate_violations(table)
    for line in violations:
        print(line)
    return EXIT_ASSERTION if violations else EXIT_OK


def cmd_precond(config: RunConfig) -> int:
    template = config.params()
    table = preconditioning_study.preconditioning_study(
        template,
        config.N,
        config.beta,
        config.nu,
        config.dt,
        steps=config.steps,
        rtol=config.rtol,
        maxit=config.maxit,
    )
    preconditioning_study.write_tables(table, config.output_dir())
    if not table["converged"].all():
        print(f"{int((~table['converged']).sum())} configuration(s) did not converge")
        return EXIT_SOLVER
    failures = preconditioning_study.trend_failures(preconditioning_study.trend_summary(table))
    for line in failures:
        logger.warning("iteration trend violated: %s", line)
        print(line)
    oracle = preconditioning_study.oracle_failures(table)
    for line in oracle:
        logger.warning("MinRes solution departs from the dense solve: %s", line)
        print(line)
    failures += oracle
    return EXIT_ASSERTION if failures else EXIT_OK


def cmd_check(config: RunConfig) -> int:
    template = config.params()
    report = diagnostics.DiagnosticsReport()
    for N in config.N:
        print(f"structural diagnostics, N={N}")
        problem = build_problem(template, N)
        result = diagnostics.structural_diagnostics(problem, seed=config.seed)
        print(result.render())
        report.checks.extend(result.checks)
    table = diagnostics.infsup_sweep(template)
    diagnostics.write_infsup(table, config.output_dir())
    sweep = diagnostics.infsup_checks(table)
    print("inf-sup sweep")
    print(sweep.render())
    report.checks.extend(sweep.checks)
    failures = report.failures()
    print(f"{len(report.checks) - len(failures)} of {len(report.checks)} checks passed")
    return EXIT_ASSERTION if failures else EXIT_OK


def cmd_solve(config: RunConfig) -> int:
    params = config.params()
    N = config.N[0]
    run = run_transient(
        params,
        N,
        rtol=config.rtol,
        maxit=config.maxit,
        initial_pressure=config.initial_pressure,
        gamma_d=config.gamma_d,
        gamma_p=config.gamma_p,
    )
    errors = compute_errors(run.final, run.exact, run.problem.dofs, run.problem.params)
    steps = pd.DataFrame(
        {
            "step": range(1, run.n_steps + 1),
            "t": [(k + 1) * run.problem.params.dt for k in range(run.n_steps)],
            "iterations": [r.iterations for r in run.reports],
            "residual": [r.residual for r in run.reports],
            "converged": [r.converged for r in run.reports],
        }
    )
    print(f"N={N} beta={params.beta:g} nu={params.nu:g} dt={run.problem.params.dt:g} steps={run.n_steps}")
    print(steps.to_string(index=False))
    label = "absolute" if errors.zero_norm else "relative"
    for name, value in errors.as_dict().items():
        if name != "zero_norm":
            print(f"{label} error {name}: {value:.5e}")
    if config.out is not None:
        path = config.out if config.out.suffix else config.out / "solve_steps.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        steps.to_csv(path, index=False, float_format="%.5e")
        logger.info("wrote %s", path)
    return EXIT_OK


COMMAND_HANDLERS = {
    "converge": cmd_converge,
    "precond": cmd_precond,
    "check": cmd_check,
    "solve": cmd_solve,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
        command = args.pop("command")
        config_path = args.pop("config")
        config = load_config(command, args, config_path)
        logging.basicConfig(level=config.log_level, format=LOG_FORMAT)
        return COMMAND_HANDLERS[command](config)
    except ConfigurationError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (SolverError, ElementConstructionError) as exc:
        logger.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except BiotError as exc:
        logger.error("%s", exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
