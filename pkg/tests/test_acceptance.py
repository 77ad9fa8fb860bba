"""Acceptance gate: one check per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline, or
``python tests/test_acceptance.py`` for just the summary. The lines are also
repeated in the pytest terminal summary.
"""
from __future__ import annotations

import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from delaylab.delay_lift import (
    CharFunction,
    DelayDescriptor,
    build_lift,
    lifted_growth,
    rightmost_real_root,
    smooth_rhs,
    verify_resolvent_structure,
)
from delaylab.matrix_core import BlockMatrix2x2, block_inverse
from delaylab.population import HarvestInput, ModelConfig, build_model, input_gain, simulate
from delaylab.spectral import (
    SIMULATED_CRITICAL_BAND,
    CharacteristicEvaluator,
    classify_stability,
    classify_value,
    dominant_real_root,
    growth_rate_fit,
    sufficient_condition,
)
from delaylab.wp_system import (
    PERTURBATION_IDENTITIES,
    verify_perturbation_identities,
    verify_system_axioms,
    worst_by_identity,
)

RESULTS: dict[int, str] = {}


def record(number, ok, detail, elapsed):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f} s) {detail}"
    RESULTS[number] = line
    print(line)
    return ok


def exp_history(s, a):
    return np.exp(-a)


# ---------------------------------------------------------------------------
# population scenario suite shared by criteria 6 to 9

A_MAX, N_AGE = 30.0, 3000


def scenario_config(beta, r, alpha, law="B2", mu=1.0):
    return ModelConfig(a_max=A_MAX, n_age=N_AGE, r=r, mu=mu, alpha=alpha, beta=beta,
                       birth_law=law, history=exp_history)


SUITE = {
    "r0_beta2": (scenario_config(2.0, 0.0, 0.0), 20.0, None),
    "r0.5_alpha0.5_beta2": (scenario_config(2.0, 0.5, 0.5), 20.0, None),
}
for _r in (0.25, 0.5, 1.0):
    for _beta, _label in ((1.0, "stable"), (1.5, "critical"), (2.0, "unstable")):
        SUITE[f"grid_r{_r}_beta{_beta}"] = (scenario_config(_beta, _r, 0.5), 40.0, _label)
# extra cases inside the sufficient-condition region, including distributed birth
SUITE["small_beta_r0.5"] = (scenario_config(0.5, 0.5, 0.0), 20.0, None)
SUITE["small_beta_r1_alpha"] = (scenario_config(0.8, 1.0, 0.3), 20.0, None)
SUITE["b1_r0.5"] = (scenario_config(1.2, 0.5, 0.2, law="B1"), 20.0, None)
SUITE["b1_r2"] = (scenario_config(0.3, 2.0, 0.0, law="B1"), 40.0, None)


@lru_cache(maxsize=None)
def run_scenario(name):
    config, t_max, _ = SUITE[name]
    model = build_model(config)
    traj = simulate(model, t_max)
    try:
        growth = growth_rate_fit(traj, 0.5)
    except Exception:  # fit failure is reported, not raised
        growth = None
    return model, traj, growth


# ---------------------------------------------------------------------------
# criteria


def criterion_1():
    start = time.perf_counter()
    kw = dict(dims=(1, 5), trials=20, seed=42, dt=1e-3, horizon=2.0)
    worst = worst_by_identity(verify_perturbation_identities(**kw))
    level = max(r.relative_residual for r in worst.values())
    raw = worst_by_identity(verify_perturbation_identities(extrapolate=False, **kw))
    raw_half = worst_by_identity(verify_perturbation_identities(extrapolate=False, refine=2, **kw))
    ratios = {k: raw_half[k].sup_residual / raw[k].sup_residual for k in PERTURBATION_IDENTITIES}
    elapsed = time.perf_counter() - start
    ok = level <= 1e-6 and max(ratios.values()) <= 0.5 and elapsed <= 60
    detail = (f"worst relative residual {level:.2e} (<= 1e-6); raw residual ratio on halving "
              f"{max(ratios.values()):.3f} (<= 0.5)")
    return record(1, ok, detail, elapsed)


def criterion_2():
    start = time.perf_counter()
    reps = verify_system_axioms(dt=1e-3, t=1.0, tau=1.0, trials=20, seed=42, dims=(1, 5))
    level = max(r.relative_residual for r in reps)
    elapsed = time.perf_counter() - start
    return record(2, level <= 1e-8 and elapsed <= 30, f"worst axiom residual {level:.2e} (<= 1e-8)", elapsed)


def criterion_3():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        full = rng.uniform(-1, 1, (n + m, n + m)) + (n + m) * np.eye(n + m)
        got = block_inverse(BlockMatrix2x2(full[:n, :n], full[:n, n:], full[n:, :n], full[n:, n:])).assemble()
        worst = max(worst, float(np.abs(got - np.linalg.solve(full, np.eye(n + m))).max()))
    elapsed = time.perf_counter() - start
    return record(3, worst <= 1e-9 and elapsed <= 5, f"max deviation {worst:.2e} (<= 1e-9)", elapsed)


def criterion_4():
    start = time.perf_counter()
    d = DelayDescriptor([[0.0]], [[1.0]], 1.0)
    root = rightmost_real_root(CharFunction(d))
    e200 = abs(lifted_growth(build_lift(d, 200)) - root)
    e400 = abs(lifted_growth(build_lift(d, 400)) - root)
    elapsed = time.perf_counter() - start
    ok = e200 <= 1e-2 and e400 <= 0.6 * e200 and elapsed <= 30
    return record(4, ok, f"root {root:.10f}; error 200: {e200:.2e}, 400: {e400:.2e} (ratio {e400 / e200:.3f})",
                  elapsed)


def criterion_5():
    start = time.perf_counter()
    ratios = []
    for seed in range(5):
        rng = np.random.default_rng([5, seed])
        n = 1 if seed % 2 == 0 else 2
        a0 = rng.uniform(-1, 0, (n, n)) - 0.5 * np.eye(n)
        a1 = rng.uniform(-0.5, 0.5, (n, n))
        d = DelayDescriptor(a0, a1, float(rng.uniform(0.5, 1.5)))
        res = []
        for big_n in (100, 200):
            ls = build_lift(d, big_n)
            res.append(verify_resolvent_structure(ls, 1.5, smooth_rhs(ls, seed)))
        ratios.append(res[1] / res[0])
    elapsed = time.perf_counter() - start
    ok = all(0.4 <= q <= 0.6 for q in ratios) and elapsed <= 30
    return record(5, ok, "residual ratios " + ", ".join(f"{q:.3f}" for q in ratios) + " (0.5 +- 20%)", elapsed)


def criterion_6():
    start = time.perf_counter()
    _, _, m1 = run_scenario("r0_beta2")
    ok1 = m1 is not None and abs(m1 - 1.0) <= 0.05
    model, _, m2 = run_scenario("r0.5_alpha0.5_beta2")
    root = dominant_real_root(CharacteristicEvaluator(model))
    tol = 0.02 if abs(root) < 0.4 else 0.05 * abs(root)
    ok2 = m2 is not None and abs(m2 - root) <= tol
    elapsed = time.perf_counter() - start
    detail = f"r=0: measured {m1:.5f} vs 1; r=0.5: measured {m2:.5f} vs root {root:.5f} (tol {tol:.3g})"
    return record(6, ok1 and ok2 and elapsed <= 120, detail, elapsed)


def criterion_7():
    start = time.perf_counter()
    bad = []
    for name, (config, _, label) in SUITE.items():
        if label is None:
            continue
        model, _, growth = run_scenario(name)
        xi0 = CharacteristicEvaluator(model)(0.0)
        if growth is None:
            bad.append(f"{name}: no fit")
        elif label == "critical":
            # beta0 = mu0 + alpha0 makes xi2(0) vanish for the continuous model
            if abs(growth) > SIMULATED_CRITICAL_BAND:
                bad.append(f"{name}: |{growth:.4f}| > {SIMULATED_CRITICAL_BAND}")
        elif np.sign(growth) != np.sign(xi0) or classify_value(xi0, 0.0) != label:
            bad.append(f"{name}: growth {growth:.4f}, xi2(0) {xi0:.4f}")
    elapsed = time.perf_counter() - start
    detail = "all 9 grid scenarios consistent" if not bad else "; ".join(bad)
    return record(7, not bad and elapsed <= 600, detail, elapsed)


def criterion_8():
    start = time.perf_counter()
    covered, bad = 0, []
    for name in SUITE:
        model, _, growth = run_scenario(name)
        if not sufficient_condition(model):
            continue
        covered += 1
        cls = classify_stability(CharacteristicEvaluator(model)).stability_class
        if growth is None or growth >= 0 or cls != "stable":
            bad.append(f"{name}: growth {growth}, class {cls}")
    elapsed = time.perf_counter() - start
    ok = covered > 0 and not bad
    detail = f"{covered} scenarios satisfy the bound; counterexamples: {bad or 'none'}"
    return record(8, ok, detail, elapsed)


def criterion_9():
    start = time.perf_counter()
    # positivity over every nonnegative-data run satisfying the step restriction
    negatives = {}
    for name in SUITE:
        model, traj, _ = run_scenario(name)
        if model.positivity_step_ok and traj.min_value < -1e-12:
            negatives[name] = traj.min_value
    positivity_ok = not negatives
    alpha_free_negative = [n for n in negatives if not run_scenario(n)[0].alpha.any()]

    # linearity in history and in harvest input
    base = build_model(scenario_config(1.5, 0.5, 0.5))
    model_h = build_model(ModelConfig(a_max=A_MAX, n_age=N_AGE, r=0.5, mu=1.0, alpha=0.5, beta=1.5, eta=0.7))
    steps = 1000
    q = HarvestInput.separable(model_h, lambda t: 1 + np.sin(t), lambda a: np.exp(-a / 3), steps)
    ref_h = simulate(base, 10.0)
    ref_q = simulate(model_h, 10.0, q)
    lin_err = 0.0
    for c in (2.0, 10.0):
        scaled_h = simulate(base.with_history(lambda s, a: c * exp_history(s, a)), 10.0)
        scaled_q = simulate(model_h, 10.0, q.scaled(c))
        for ref, got in ((ref_h, scaled_h), (ref_q, scaled_q)):
            for x, y in ((ref.total_population, got.total_population), (ref.final_profile, got.final_profile)):
                lin_err = max(lin_err, float(np.abs(y - c * x).max() / np.abs(c * x).max()))
    linear_ok = lin_err <= 1e-12

    # input gain under grid doubling
    g1 = input_gain(build_model(ModelConfig(a_max=15.0, n_age=750, r=0.5, mu=1.0, alpha=0.5, beta=1.0, eta=1.0)),
                    5.0, probes=5, seed=9).gain
    g2 = input_gain(build_model(ModelConfig(a_max=15.0, n_age=1500, r=0.5, mu=1.0, alpha=0.5, beta=1.0, eta=1.0)),
                    5.0, probes=5, seed=9).gain
    gain_ok = abs(g2 - g1) <= 0.1 * g1
    elapsed = time.perf_counter() - start
    worst_neg = min(negatives.values()) if negatives else 0.0
    violation = (f"violated in {len(negatives)} runs, all with alpha > 0 (min {worst_neg:.2e})"
                 if not alpha_free_negative else f"violated in {len(negatives)} runs incl. alpha = 0: {alpha_free_negative}")
    detail = (f"positivity {'ok' if positivity_ok else violation}; "
              f"linearity err {lin_err:.1e}; input gain {g1:.4f} -> {g2:.4f}")
    return record(9, positivity_ok and linear_ok and gain_ok, detail, elapsed)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9]


@pytest.mark.slow
@pytest.mark.parametrize("check", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 10)])
def test_acceptance(check):
    assert check(), RESULTS.get(int(check.__name__.split("_")[1]))


if __name__ == "__main__":
    outcomes = [check() for check in CRITERIA]
    sys.exit(0 if all(outcomes) else 1)
