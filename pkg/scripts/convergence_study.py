"""Refinement studies: lifted growth vs characteristic root, resolvent residual, raw identity residual."""
import argparse
import json

from delaylab.delay_lift import (
    CharFunction,
    DelayDescriptor,
    build_lift,
    lifted_growth,
    rightmost_real_root,
    smooth_rhs,
    verify_resolvent_structure,
)
from delaylab.wp_system import verify_perturbation_identities, worst_by_identity


def delay_study(a0, a1, r, points):
    d = DelayDescriptor([[a0]], [[a1]], r)
    root = rightmost_real_root(CharFunction(d))
    rows = []
    for n in points:
        ls = build_lift(d, n)
        rows.append({
            "history_points": n,
            "growth_error": abs(lifted_growth(ls) - root) if root is not None else None,
            "resolvent_residual": verify_resolvent_structure(ls, 1.5, smooth_rhs(ls)),
        })
    return {"root": root, "rows": rows}


def identity_study(refinements, trials, seed):
    out = []
    for k in refinements:
        reps = verify_perturbation_identities(trials=trials, seed=seed, extrapolate=False, refine=k)
        out.append({"refine": k, **{name: rep.sup_residual for name, rep in worst_by_identity(reps).items()}})
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--a0", type=float, default=0.0)
    p.add_argument("--a1", type=float, default=1.0)
    p.add_argument("--delay", type=float, default=1.0)
    p.add_argument("--points", type=int, nargs="+", default=[50, 100, 200, 400])
    p.add_argument("--refinements", type=int, nargs="+", default=[1, 2, 4])
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    args = p.parse_args(argv)
    result = {
        "delay": delay_study(args.a0, args.a1, args.delay, args.points),
        "identities": identity_study(args.refinements, args.trials, args.seed),
    }
    print(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
