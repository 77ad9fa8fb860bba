"""Command-line front end.

Exit status: 0 success, 1 a verification or agreement check failed, 2 bad
usage or configuration.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .delay_lift import CharFunction, DelayDescriptor, build_lift, lifted_growth, rightmost_real_root
from .errors import ConfigError, ConvergenceError, DelayLabError, SimulationOverflowError
from .population import simulate
from .scenario import build_harvest, load_scenario, scenario_model
from .spectral import CharacteristicEvaluator, FitError, classify_stability, cross_check, growth_rate_fit, signs_agree
from .wp_system import verify_perturbation_identities, verify_system_axioms, worst_by_identity

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(kind):
    def parse(text):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value

    return parse


def _matrix(text):
    try:
        value = json.loads(text)
        return np.atleast_2d(np.asarray(value, dtype=float))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise argparse.ArgumentTypeError(f"not a number or JSON matrix: {text}") from exc


def cmd_verify_identities(args):
    reports = verify_perturbation_identities(
        dims=(1, args.dim), trials=args.trials, seed=args.seed, dt=args.dt,
        horizon=args.horizon, jobs=args.jobs,
    )
    reports += verify_system_axioms(
        dt=args.dt, t=args.horizon / 2, tau=args.horizon / 2, trials=args.trials,
        seed=args.seed, dims=(1, args.dim),
    )
    ok = True
    for name, rep in worst_by_identity(reports).items():
        passed = rep.relative_residual <= args.tol
        ok &= passed
        print(f"{name:18s} max relative residual {rep.relative_residual:.3e}  "
              f"(trial {rep.trial})  {'ok' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def gap_tolerance(history_points):
    """Allowed |lifted growth - root| for a given history resolution (first-order scheme)."""
    return 2.0 / history_points


def cmd_delay_spectrum(args):
    a0 = args.a0
    a1 = args.a1 if args.a1.shape == a0.shape else np.broadcast_to(args.a1, a0.shape)
    descriptor = DelayDescriptor(a0, a1, args.delay)
    root = rightmost_real_root(CharFunction(descriptor), tuple(args.bracket))
    try:
        growth = lifted_growth(build_lift(descriptor, args.history_points), dt=args.propagator_dt)
    except ConvergenceError as exc:
        growth = None
        print(f"lifted growth: not available ({exc})")
    if root is None:
        print(f"no real root in bracket [{args.bracket[0]}, {args.bracket[1]}]")
        if growth is not None:
            print(f"lifted growth: {growth!r}")
        return EXIT_OK
    print(f"rightmost real root: {root!r}")
    if growth is None:
        return EXIT_FAIL
    gap = abs(growth - root)
    tol = gap_tolerance(args.history_points)
    print(f"lifted growth: {growth!r}")
    print(f"gap: {gap:.3e} (tolerance {tol:.3e})")
    return EXIT_OK if gap <= tol else EXIT_FAIL


def cmd_simulate(args):
    cfg = load_scenario(args.config)
    model = scenario_model(cfg)
    harvest = None
    if cfg.harvest is not None:
        harvest = build_harvest(cfg.harvest, model, round(cfg.run.t_max / model.dt))
    try:
        traj = simulate(model, cfg.run.t_max, harvest, cfg.run.snapshot_stride)
    except SimulationOverflowError as exc:
        print(f"simulation aborted: {exc} (last valid t = {exc.last_valid_time})", file=sys.stderr)
        return EXIT_FAIL
    traj.write_csv(args.out)
    if args.snapshots:
        traj.write_snapshots(args.snapshots, model.ages)
    try:
        measured = repr(growth_rate_fit(traj, cfg.run.discard_fraction))
    except FitError:
        measured = "n/a"
    print(f"final total population {float(traj.total_population[-1])!r}; measured growth {measured}")
    return EXIT_OK


def _write_report(report, out):
    text = report.to_json()
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_analyze(args):
    model = scenario_model(load_scenario(args.config))
    _write_report(classify_stability(CharacteristicEvaluator(model)), args.out)
    return EXIT_OK


def cmd_cross_check(args):
    cfg = load_scenario(args.config)
    model = scenario_model(cfg)
    try:
        report = cross_check(model, cfg.run.t_max, cfg.run.discard_fraction)
    except (FitError, SimulationOverflowError) as exc:
        print(f"cross-check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _write_report(report, args.out)
    return EXIT_OK if signs_agree(report) else EXIT_FAIL


def build_parser():
    parser = _Parser(prog="delaylab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("verify-identities", help="perturbation identities and system axioms")
    p.add_argument("--trials", type=_positive(int), default=20)
    p.add_argument("--dim", type=_positive(int), default=5, help="largest state dimension")
    p.add_argument("--horizon", type=_positive(float), default=2.0)
    p.add_argument("--dt", type=_positive(float), default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=_positive(float), default=1e-6)
    p.add_argument("--jobs", type=_positive(int), default=1)
    p.set_defaults(func=cmd_verify_identities)

    p = sub.add_parser("delay-spectrum", help="characteristic root vs lifted growth")
    p.add_argument("--a0", type=_matrix, default=np.zeros((1, 1)))
    p.add_argument("--a1", type=_matrix, default=np.zeros((1, 1)))
    p.add_argument("--delay", type=_positive(float), default=1.0)
    p.add_argument("--history-points", type=_positive(int), default=200)
    p.add_argument("--bracket", type=float, nargs=2, default=(-5.0, 5.0))
    p.add_argument("--propagator-dt", type=_positive(float), default=1.0)
    p.set_defaults(func=cmd_delay_spectrum)

    p = sub.add_parser("simulate", help="simulate a population scenario to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--snapshots", help="prefix for per-snapshot a,w CSV files")
    p.set_defaults(func=cmd_simulate)

    for name, func in (("analyze", cmd_analyze), ("cross-check", cmd_cross_check)):
        p = sub.add_parser(name, help="spectral report as JSON")
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DelayLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
