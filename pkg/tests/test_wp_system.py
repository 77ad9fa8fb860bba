import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaylab.errors import AdmissibilityError, DimensionError, GridAlignmentError, PreconditionError
from delaylab.matrix_core import mat_exp
from delaylab.wp_system import (
    PERTURBATION_IDENTITIES,
    SYSTEM_AXIOMS,
    SampledSignal,
    StateSpaceSystem,
    cell_average_map,
    cell_resolvent_map,
    feedback_close,
    grid_steps,
    io_map,
    observation_map,
    richardson,
    state_map,
    verify_perturbation_identities,
    verify_system_axioms,
    worst_by_identity,
)


def random_system(seed, n=3, m=2, p=2, with_d=True):
    rng = np.random.default_rng(seed)
    return StateSpaceSystem(
        rng.uniform(-1, 1, (n, n)) - np.eye(n),
        rng.uniform(-1, 1, (n, m)),
        rng.uniform(-1, 1, (p, n)),
        rng.uniform(-0.5, 0.5, (p, m)) if with_d else None,
    )


def test_system_shapes_checked():
    with pytest.raises(DimensionError):
        StateSpaceSystem(np.eye(2), np.ones((3, 1)), np.ones((1, 2)))
    sys = StateSpaceSystem(np.eye(2), np.ones((2, 1)), np.ones((3, 2)))
    assert sys.d.shape == (3, 1) and not sys.d.any()


def test_grid_steps():
    assert grid_steps(1.0, 0.001) == 1000
    with pytest.raises(GridAlignmentError):
        grid_steps(1.0005, 0.001)


def test_refined_signal_same_function():
    u = SampledSignal(0.5, [1.0, 2.0, 3.0])
    f = u.refined(4)
    assert f.dt == 0.125 and len(f) == 12
    assert np.isclose(f.samples.sum() * f.dt, u.samples.sum() * u.dt)


def test_io_map_step_response_closed_form():
    sys = StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]])
    dt = 0.01
    u = SampledSignal(dt, np.ones(201))
    y = io_map(sys, u, 2.0).samples[:, 0]
    assert np.allclose(y, 1 - np.exp(-dt * np.arange(201)), atol=1e-14)


def test_observation_map_closed_form():
    sys = StateSpaceSystem([[0.0, 1.0], [-1.0, 0.0]], np.zeros((2, 1)), [[1.0, 0.0]])
    y = observation_map(sys, [1.0, 0.0], 3.0, 0.01).samples[:, 0]
    assert np.allclose(y, np.cos(0.01 * np.arange(301)), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_io_map_linear(seed, alpha, beta):
    sys = random_system(seed)
    rng = np.random.default_rng(seed + 1)
    u = SampledSignal(0.01, rng.uniform(-1, 1, (101, 2)))
    v = SampledSignal(0.01, rng.uniform(-1, 1, (101, 2)))
    lhs = io_map(sys, u * alpha + v * beta).samples
    rhs = alpha * io_map(sys, u).samples + beta * io_map(sys, v).samples
    assert np.allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 99))
def test_io_map_causal(seed, k):
    sys = random_system(seed)
    rng = np.random.default_rng(seed)
    u = SampledSignal(0.01, rng.uniform(-1, 1, (101, 2)))
    changed = u.samples.copy()
    changed[k + 1:] += rng.uniform(-1, 1, changed[k + 1:].shape)
    y1 = io_map(sys, u).samples
    y2 = io_map(sys, SampledSignal(0.01, changed)).samples
    assert np.array_equal(y1[: k + 1], y2[: k + 1])


def test_state_map_zero_input_is_semigroup():
    sys = random_system(4)
    x0 = np.array([1.0, -1.0, 0.5])
    u = SampledSignal(0.01, np.zeros((100, 2)))
    assert np.allclose(state_map(sys, x0, u, 1.0), mat_exp(sys.a, 1.0) @ x0, atol=1e-13)


def test_feedback_trivial_cases():
    sys = random_system(5)
    assert feedback_close(sys, np.zeros((2, 2))) is sys
    no_d = random_system(5, with_d=False)
    gamma = np.array([[0.3, -0.2], [0.1, 0.4]])
    closed = feedback_close(no_d, gamma)
    assert np.allclose(closed.a, no_d.a + no_d.b @ gamma @ no_d.c)
    assert np.allclose(closed.c, no_d.c) and np.allclose(closed.b, no_d.b)


def test_feedback_inadmissible():
    sys = StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]], [[1.0]])
    with pytest.raises(AdmissibilityError):
        feedback_close(sys, [[1.0]])


@pytest.mark.parametrize("seed", range(3))
def test_feedback_output_is_fixed_point(seed):
    # closed-loop output y solves y = F(v + gamma y), i.e. y = (I - F gamma)^-1 F v
    sys = random_system(seed)
    gamma = np.random.default_rng(seed).uniform(-0.5, 0.5, (2, 2))
    closed = feedback_close(sys, gamma)
    loop = StateSpaceSystem(sys.a, sys.b @ gamma, sys.c, sys.d @ gamma)
    v = SampledSignal(0.01, np.random.default_rng(seed + 7).uniform(-1, 1, (200, 2)))
    lhs = richardson(lambda s: cell_average_map(closed, s).samples, v)
    rhs = richardson(lambda s: cell_resolvent_map(loop, cell_average_map(sys, s)).samples, v)
    assert np.abs(lhs - rhs).max() <= 1e-8 * np.abs(lhs).max()


def test_richardson_keeps_refinement_invariant_pipelines():
    u = SampledSignal(0.1, np.arange(10.0))
    assert np.allclose(richardson(lambda s: s.samples, u), u.samples)


def test_cell_average_of_constant_state():
    # with a = 0 the output is c x0 + c b t-average; mean over [k dt, (k+1) dt] of t is (k + 1/2) dt
    sys = StateSpaceSystem([[0.0]], [[1.0]], [[1.0]])
    u = SampledSignal(0.5, np.ones(4))
    assert np.allclose(cell_average_map(sys, u, [2.0]).samples[:, 0], 2.0 + 0.5 * (np.arange(4) + 0.5))


def test_identities_small_run():
    reps = verify_perturbation_identities(dims=(1, 3), trials=3, seed=1, dt=2e-3, horizon=0.4)
    assert len(reps) == 3 * len(PERTURBATION_IDENTITIES)
    assert max(r.relative_residual for r in reps) <= 1e-9


def test_zero_perturbation_main_is_exact():
    reps = verify_perturbation_identities(dims=(1, 4), trials=3, seed=5, dt=1e-2, horizon=1.0,
                                          extrapolate=False, perturbation_scale=0.0)
    for rep in reps:
        if rep.identity in ("main", "Frelation"):
            assert rep.sup_residual == 0.0


def test_identities_raw_error_is_second_order():
    kw = dict(dims=(1, 3), trials=2, seed=2, dt=4e-3, horizon=0.8, extrapolate=False)
    coarse = worst_by_identity(verify_perturbation_identities(**kw))
    fine = worst_by_identity(verify_perturbation_identities(refine=2, **kw))
    for name in PERTURBATION_IDENTITIES:
        ratio = fine[name].sup_residual / coarse[name].sup_residual
        assert 0.15 < ratio < 0.35, (name, ratio)


@pytest.mark.parametrize(
    "kwargs",
    [dict(trials=0), dict(dt=-1.0), dict(dt=0.1, horizon=2.0), dict(dims=(3, 2))],
)
def test_identity_preconditions(kwargs):
    with pytest.raises(PreconditionError):
        verify_perturbation_identities(**kwargs)


def test_identities_deterministic():
    kw = dict(dims=(1, 2), trials=1, seed=9, dt=5e-3, horizon=0.5)
    a = [r.sup_residual for r in verify_perturbation_identities(**kw)]
    b = [r.sup_residual for r in verify_perturbation_identities(jobs=2, **kw)]
    assert a == b


def test_axioms():
    reps = verify_system_axioms(dt=1e-2, t=0.5, tau=0.7, trials=4, seed=3, dims=(1, 4))
    assert {r.identity for r in reps} == set(SYSTEM_AXIOMS)
    assert max(r.relative_residual for r in reps) <= 1e-10


def test_axioms_off_grid_rejected():
    with pytest.raises(GridAlignmentError):
        verify_system_axioms(dt=0.1, t=0.55)
