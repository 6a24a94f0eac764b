"""Command line interface.

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 refusal to run an unstable policy.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

from . import analysis, reporting
from .channel import NoStorage
from .config import Experiment, load_config, parse_config
from .errors import ConfigurationError, InstabilityError, SolverError
from .harness import PolicyConstraint, compare_policies, run_sweep, run_trace

log = logging.getLogger("ehbattery")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_UNSTABLE = 0, 1, 2, 3


@contextmanager
def _output(path):
    if path is None or str(path) == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _experiment(args) -> Experiment:
    exp = load_config(args.config) if args.config else parse_config({})
    sc = exp.scenario
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    if args.frames is not None:
        sc = replace(sc, frames=args.frames)
    return replace(exp, scenario=sc)


def cmd_solve(args, exp):
    sc = exp.scenario
    b = sc.battery
    pol = sc.policy
    if isinstance(pol, NoStorage):
        raise ConfigurationError("solve needs a constant or water-filling policy")
    if isinstance(pol, PolicyConstraint):
        theta = pol.decay_rate(b.e_c)
        if pol.kind == "constant":
            sol = analysis.solve_constant_demand_for(theta, sc.arrival, b.mu, b.beta)
        else:
            sol = analysis.solve_waterfilling_cutoff(theta, sc.arrival, sc.fading, sc.channel, b.mu, b.beta)
        record = {
            "policy": sol.kind,
            "theta": theta,
            "parameter": sol.policy_parameter,
            "mgf_residual": sol.mgf_residual,
            "mean_net_flow": sol.mean_net_flow,
            "stable": sol.stable,
        }
    else:
        flow, stable = analysis.mean_net_flow(pol, sc.arrival, sc.fading, sc.channel, b.mu, b.beta)
        if not stable:
            raise InstabilityError(f"{pol!r} has mean net flow {flow:.6g} <= 0", flow)
        theta = analysis.solve_decay_rate(pol, sc.arrival, sc.fading, sc.channel, b.mu, b.beta)
        residual = 0.0
        if math.isfinite(theta):
            value, _ = analysis.mgf_numeric(theta, pol, sc.arrival, sc.fading, sc.channel, b.mu, b.beta)
            residual = abs(value - 1.0)
        record = {
            "policy": pol.kind,
            "theta": theta,
            "parameter": float(pol.parameter),
            "mgf_residual": residual,
            "mean_net_flow": flow,
            "stable": stable,
        }
    with _output(args.out) as fh:
        reporting.write_rows(fh, reporting.SOLVE_COLUMNS, [record])


def cmd_simulate(args, exp):
    stats = run_trace(exp.scenario)
    tail_path = args.tail_out
    if tail_path is None and args.out not in (None, "-"):
        p = Path(args.out)
        tail_path = p.with_name(p.stem + "_tail" + (p.suffix or ".csv"))
    with _output(args.out) as fh:
        reporting.write_rows(fh, reporting.TRACE_COLUMNS, [reporting.trace_record(stats)])
        if tail_path is None:
            fh.write("\n")
            reporting.write_rows(fh, reporting.TAIL_COLUMNS, reporting.tail_records(stats))
    if tail_path is not None:
        with _output(tail_path) as fh:
            reporting.write_rows(fh, reporting.TAIL_COLUMNS, reporting.tail_records(stats))


def cmd_sweep(args, exp):
    spec = exp.sweep
    parameter = args.parameter or (spec.parameter if spec else None)
    values = args.values if args.values is not None else (spec.values if spec else None)
    if parameter is None or values is None:
        raise ConfigurationError("sweep needs a parameter and values (config 'sweep' section or --parameter/--values)")
    rows = run_sweep(exp.scenario, parameter, values, workers=args.workers)
    for r in rows:
        if r.error:
            log.warning("sweep point %s=%s failed: %s", parameter, r.value, r.error)
    with _output(args.out) as fh:
        reporting.write_rows(fh, reporting.SWEEP_COLUMNS, reporting.sweep_records(rows))


def cmd_compare(args, exp):
    if exp.compare is None:
        raise ConfigurationError("compare needs a 'compare' section with policies")
    rows = compare_policies(exp.scenario, exp.compare.policies, exp.compare.e_c_values, workers=args.workers)
    with _output(args.out) as fh:
        reporting.write_rows(fh, reporting.COMPARE_COLUMNS, reporting.compare_records(rows))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ehbattery",
        description="Energy-harvesting transmitter with a lossy battery: solve demand policies and simulate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment file")
    common.add_argument("--seed", type=int, help="override simulation.seed")
    common.add_argument("--frames", type=int, help="override simulation.frames (including burn-in)")
    common.add_argument("--out", help="output CSV path (default: stdout)")
    common.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("solve", parents=[common], help="solve the balance equation for the policy parameter")
    sim = sub.add_parser("simulate", parents=[common], help="run one scenario and report trace statistics")
    sim.add_argument("--tail-out", help="tail CSV path (default: <out>_tail.csv)")
    sw = sub.add_parser("sweep", parents=[common], help="underflow probability versus a swept parameter")
    sw.add_argument("--parameter", help="dotted parameter path, e.g. battery.e_c")
    sw.add_argument("--values", type=float, nargs="+", help="values to sweep")
    sub.add_parser("compare", parents=[common], help="average service rate of policies across capacities")
    return parser


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "sweep": cmd_sweep, "compare": cmd_compare}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        exp = _experiment(args)
        COMMANDS[args.command](args, exp)
    except ConfigurationError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except SolverError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except InstabilityError as exc:
        log.error("refusing to run: %s", exc)
        return EXIT_UNSTABLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
