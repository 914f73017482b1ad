"""Command-line front end; every command prints one JSON report.

Exit codes: 0 success, 2 data error, 3 model incompatible with the data,
4 non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .em import (EmOptions, check_expert_assumptions, em_fit, lrt_gof, profile_sensitivity,
                 select_mechanism)
from .errors import ConvergenceError, DataError, IdentificationError, SubgroupCausalError
from .gibbs import GibbsOptions, effect_modification_test, gibbs_run, posterior_summary
from .identify import (bounds_m5, check_m2_rank, check_m3_condition, check_m4_condition,
                       check_mx_condition, identify_m1, identify_m2, identify_m3_ce_randomized,
                       identify_m3_cor, identify_m4, identify_mx, solve_m4)
from .io import FIXTURES, ingest, load_fixture, table_digest, to_jsonable
from .measures import Measure, effects_from_joint
from .simulate import (DgpSpec, SIMULATION_OUTCOME, generate_complete, mask_and_recover,
                       replicate_study, simulation_dgp)
from .tables import Mechanism, ObservedTable, population_log_or

SEED_ENV = "SUBGROUP_CAUSAL_SEED"
COMMANDS = ("analyze", "identify", "gof", "bounds", "gibbs", "sensitivity", "simulate",
            "mask", "select")
ASSUME = {"latent": "latent_ignorable", "randomized": "complete_randomization"}


def _grid(text: str) -> np.ndarray:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like lo:hi:step") from None
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError("grid needs step > 0 and hi >= lo")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subgroup-causal",
        description="Subgroup causal effects with a nonignorably missing covariate.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--input", help="count table (.json or .csv)")
        src.add_argument("--fixture", choices=FIXTURES)
        p.add_argument("--format", choices=("json", "csv"))
        p.add_argument("--mechanism", default=None, choices=("1", "2", "3", "4", "5", "x"))
        p.add_argument("--measure", default="cor", choices=("crd", "crr", "cor"))
        p.add_argument("--assume", default="randomized", choices=tuple(ASSUME))
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--iters", type=int, default=10000)
        p.add_argument("--burnin", type=int, default=5000)
        p.add_argument("--grid", type=_grid, default=None)
        p.add_argument("--replicates", type=int, default=200)
        p.add_argument("--n", type=int, default=1000)
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--draws-out", help="export retained draws as CSV (gibbs)")
    return parser


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise DataError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _table(args) -> ObservedTable:
    if args.fixture:
        return load_fixture(args.fixture)
    if args.input:
        return ingest(args.input, args.format)
    raise DataError("either --input or --fixture is required")


def _mechanism(args, default: str) -> Mechanism:
    return Mechanism.parse(args.mechanism or default)


def _em_options(args) -> EmOptions:
    return EmOptions(randomized=args.assume == "randomized")


def _gibbs_options(args, seed: int) -> GibbsOptions:
    return GibbsOptions(iterations=args.iters, burnin=args.burnin, seed=seed,
                        randomized=args.assume == "randomized")


def _joint_report(joint) -> dict:
    return {"p": joint.p, "prob_missing": joint.prob_missing(),
            "outcome_given_tx": joint.outcome_given_tx()}


def _estimate_report(est) -> dict:
    return {"measure": est.measure, "ce_x": est.ce_x, "ce_total": est.ce_total,
            "p_treated": est.p_treated, "p_control": est.p_control,
            "provenance": est.provenance}


def _conditions(table: ObservedTable, kind: Mechanism) -> list:
    if kind is Mechanism.M2:
        return [check_m2_rank(table, t) for t in (0, 1)]
    if kind is Mechanism.M3:
        return [check_m3_condition(table, y) for y in range(table.K)]
    if kind is Mechanism.M4:
        return [check_m4_condition(table)]
    if kind is Mechanism.MX:
        return [check_mx_condition(table)]
    return []


def _posterior_report(draws, measure: Measure) -> dict:
    ce = draws.effects(measure)
    report = {"ce_x": [posterior_summary(ce[:, x]) for x in range(ce.shape[1])],
              "acceptance_rate": draws.acceptance_rate, "warning": draws.warning,
              "retained": len(draws)}
    if measure is Measure.LOG_CRR:
        report["crr_x"] = [posterior_summary(draws, f"crr_{x}") for x in range(ce.shape[1])]
    if ce.shape[1] == 2:
        report["effect_modification"] = effect_modification_test(draws, measure)
    return report


def cmd_identify(args, table, seed):
    kind = _mechanism(args, "2")
    measure = Measure.parse(args.measure)
    assume = ASSUME[args.assume]
    report = {"mechanism": kind, "conditions": _conditions(table, kind)}
    if kind is Mechanism.M5:
        report["bounds"] = bounds_m5(table, measure)
        return report
    if kind is Mechanism.M3:
        if assume == "complete_randomization" and table.J == 2 and table.K == 2:
            report["estimate"] = _estimate_report(identify_m3_ce_randomized(table, measure))
        elif measure is Measure.LOG_COR:
            report["ce_x"] = identify_m3_cor(table)
        else:
            raise IdentificationError("M3 identifies only the causal odds ratio without "
                                      "complete randomization; use --measure cor")
        return report
    solver = {Mechanism.M1: identify_m1, Mechanism.M2: identify_m2, Mechanism.M4: identify_m4,
              Mechanism.MX: identify_mx}[kind]
    joint = solver(table)
    if kind is Mechanism.M4:
        report["m4_solution"] = solve_m4(table)
    report["joint"] = _joint_report(joint)
    report["estimate"] = _estimate_report(
        effects_from_joint(joint, measure, assume, provenance=f"closed form {kind.value}"))
    return report


def cmd_gof(args, table, seed):
    kind = _mechanism(args, "2")
    return {"mechanism": kind, "gof": lrt_gof(table, kind)}


def cmd_bounds(args, table, seed):
    b = bounds_m5(table, Measure.parse(args.measure))
    return {"bounds": b, "infinite": b.has_infinite}


def cmd_select(args, table, seed):
    sel = select_mechanism(table, (1, 2, 3, 4), _em_options(args))
    return {"chosen": sel.chosen, "logliks": {k.value: v for k, v in sel.logliks.items()},
            "failed": list(sel.failed)}


def cmd_gibbs(args, table, seed):
    kind = _mechanism(args, "2")
    measure = Measure.parse(args.measure)
    opts = _gibbs_options(args, seed)
    draws = gibbs_run(table, kind, opts)
    if args.draws_out:
        _export_draws(draws, measure, args.draws_out)
    return {"mechanism": kind, "gibbs_options": opts, "posterior": _posterior_report(draws, measure)}


def _export_draws(draws, measure, path):
    ce = draws.effects(measure)
    J, K = draws.pi_y.shape[2], draws.pi_y.shape[3]
    header = ["draw"] + [f"pi_x_{x}" for x in range(J)] + [f"pi_t_{x}" for x in range(J)]
    header += [f"pi_y_{t}{x}{y}" for t in range(2) for x in range(J) for y in range(K)]
    header += [f"pi_m_{t}{x}{y}" for t in range(2) for x in range(J) for y in range(K)]
    header += [f"ce_{x}" for x in range(ce.shape[1])]
    if draws.coef is not None:
        header += ["b0", "bT", "bX", "bY"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in range(len(draws)):
            row = [r, *draws.pi_x[r], *draws.pi_t[r], *draws.pi_y[r].ravel(),
                   *draws.pi_m[r].ravel(), *ce[r]]
            if draws.coef is not None:
                row += list(draws.coef[r])
            w.writerow([repr(float(v)) if not isinstance(v, int) else v for v in row])


def cmd_sensitivity(args, table, seed):
    grid = args.grid if args.grid is not None else _grid("-2:2:0.25")
    curve = profile_sensitivity(table, grid, _em_options(args))
    return {"sensitivity": curve}


def cmd_analyze(args, table, seed):
    kind = _mechanism(args, "2")
    measure = Measure.parse(args.measure)
    assume = ASSUME[args.assume]
    em_opts = _em_options(args)
    report = {"mechanism": kind, "conditions": _conditions(table, kind),
              "population_log_or": population_log_or(table)}
    if kind is Mechanism.M5:
        report["bounds"] = bounds_m5(table, measure)
        return report
    fit = em_fit(table, kind, em_opts)
    if not fit.converged:
        raise ConvergenceError(f"EM did not converge for {kind.value}")
    report["mle"] = {"loglik": fit.loglik, "iterations": fit.iterations,
                     "on_boundary": fit.on_boundary, "joint": _joint_report(fit.joint),
                     "estimate": _estimate_report(
                         effects_from_joint(fit.joint, measure, assume,
                                            provenance=f"EM {kind.value}"))}
    binary = table.J == 2 and table.K == 2
    if binary and args.assume == "randomized":
        report["gof"] = lrt_gof(table, kind)
    if binary:
        report["expert_assumptions"] = check_expert_assumptions(fit.joint)
    if table.K == 2:
        report["bounds"] = bounds_m5(table, measure)
    if args.iters > 0 and table.is_integral():
        opts = _gibbs_options(args, seed)
        report["gibbs_options"] = opts
        report["posterior"] = _posterior_report(gibbs_run(table, kind, opts), measure)
    return report


def cmd_simulate(args, table, seed):
    kinds = [args.mechanism] if args.mechanism else ["1", "2", "3", "4", "5"]
    dgps = {Mechanism.parse(k).value: simulation_dgp(k, args.n) for k in kinds}
    posterior = args.iters > 0
    opts = GibbsOptions(iterations=args.iters, burnin=args.burnin, seed=seed) if posterior else None
    seeds = [seed * 1_000_003 + r for r in range(args.replicates)]
    study = replicate_study(dgps, ("M1", "M2", "M3", "M4", "bounds"), n=args.n,
                            replicates=args.replicates, seeds=seeds, gibbs_options=opts,
                            measure=Measure.parse(args.measure), posterior=posterior)
    return {"truth": study.truth, "records": study.records(), "replicates": args.replicates,
            "n": args.n}


def cmd_mask(args, table, seed):
    if table is None:
        spec = DgpSpec(SIMULATION_OUTCOME, 0.5, 0.5, simulation_dgp("1").missingness,
                       args.n, seed)
        table = generate_complete(spec)
    result = mask_and_recover(table, seed=seed, em_options=_em_options(args))
    return {"rmse": result, "diagonal_is_row_min": result.diagonal_is_row_min()}


HANDLERS = {"analyze": cmd_analyze, "identify": cmd_identify, "gof": cmd_gof,
            "bounds": cmd_bounds, "gibbs": cmd_gibbs, "sensitivity": cmd_sensitivity,
            "simulate": cmd_simulate, "mask": cmd_mask, "select": cmd_select}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, DataError):
        return 2
    if isinstance(exc, IdentificationError):
        return 3
    if isinstance(exc, ConvergenceError):
        return 4
    return getattr(exc, "exit_code", 1)


def _execute(args):
    report = {"command": args.command, "tool_version": __version__,
              "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    try:
        seed = _seed(args)
        report["seed"] = seed
        report["options"] = {k: v for k, v in vars(args).items()
                             if k not in ("out", "draws_out", "command")}
        needs_table = args.command not in ("simulate", "mask") or args.input or args.fixture
        table = _table(args) if needs_table else None
        if table is not None:
            report["input_digest"] = table_digest(table)
            report["input"] = {"n_obs": table.n_obs, "n_mis": table.n_mis}
        report.update(HANDLERS[args.command](args, table, seed))
        code = 0
    except (SubgroupCausalError, ValueError) as exc:
        code = exit_code_for(exc) if isinstance(exc, SubgroupCausalError) else 2
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    return code, to_jsonable(report)


def run_command(argv: Optional[Sequence[str]] = None):
    """Run one command; returns ``(exit_code, report)`` without writing anything."""
    return _execute(build_parser().parse_args(argv))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    code, report = _execute(args)
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if "error" in report:
        sys.stderr.write(f"error: {report['error']['message']}\n")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
