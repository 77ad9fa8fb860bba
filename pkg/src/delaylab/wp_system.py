"""Finite-dimensional regular linear systems and their operator calculus.

A system is the quadruple (A, B, C, D). Its four maps are

* ``T(t) = exp(A t)``                       (state semigroup)
* ``Phi(t) u = int_0^t T(t - s) B u(s) ds`` (input to state)
* ``(Psi x)(s) = C T(s) x``                 (state to output)
* ``F u = C Phi(.) u + D u``                (input to output)

Inputs are zero-order-hold signals: sample ``k`` is the value on
``[k dt, (k + 1) dt)``. Every map is then evaluated exactly per step from
:func:`~delaylab.matrix_core.zoh_discretize`.

Two sampling conventions are used for outputs. The *point* convention
(``io_map``, ``observation_map``) returns ``y(k dt)``. The *cell* convention
(``cell_average_map``) returns the mean of ``y`` over each hold interval, which
is again a zero-order-hold signal and so can be fed to the next map. Operator
identities are checked in the cell convention.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AdmissibilityError,
    ConvergenceError,
    DimensionError,
    GridAlignmentError,
    PreconditionError,
    SingularMatrixError,
)
from .matrix_core import as_matrix, inverse, mat_exp, zoh_discretize


@dataclass(frozen=True)
class StateSpaceSystem:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray = None

    def __post_init__(self):
        a = as_matrix(self.a, "a")
        b = as_matrix(self.b, "b")
        c = as_matrix(self.c, "c")
        if a.shape[0] != a.shape[1]:
            raise DimensionError(f"a must be square, got {a.shape}")
        n = a.shape[0]
        if b.shape[0] != n:
            raise DimensionError(f"b must have {n} rows, got {b.shape}")
        if c.shape[1] != n:
            raise DimensionError(f"c must have {n} columns, got {c.shape}")
        d = np.zeros((c.shape[0], b.shape[1])) if self.d is None else as_matrix(self.d, "d")
        if d.shape != (c.shape[0], b.shape[1]):
            raise DimensionError(f"d must be {(c.shape[0], b.shape[1])}, got {d.shape}")
        for name, value in zip("abcd", (a, b, c, d)):
            object.__setattr__(self, name, value)

    @property
    def n_states(self):
        return self.a.shape[0]

    @property
    def n_inputs(self):
        return self.b.shape[1]

    @property
    def n_outputs(self):
        return self.c.shape[0]


@dataclass(frozen=True)
class SampledSignal:
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise PreconditionError(f"dt must be positive, got {self.dt}")
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2:
            raise DimensionError(f"samples must be (count, dim), got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise PreconditionError("samples must be finite")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def times(self):
        return self.dt * np.arange(len(self))

    def shifted(self, steps):
        """The signal ``u(tau + .)`` for ``tau = steps * dt``."""
        return SampledSignal(self.dt, self.samples[steps:])

    def truncated(self, steps):
        """Zero every sample after index ``steps``."""
        s = self.samples.copy()
        s[steps + 1:] = 0.0
        return SampledSignal(self.dt, s)

    def refined(self, factor):
        """Same held function on a grid ``factor`` times finer."""
        return SampledSignal(self.dt / factor, np.repeat(self.samples, factor, axis=0))

    def __add__(self, other):
        _check_same_grid(self, other)
        return SampledSignal(self.dt, self.samples + other.samples)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return SampledSignal(self.dt, self.samples - other.samples)

    def __mul__(self, scalar):
        return SampledSignal(self.dt, scalar * self.samples)

    __rmul__ = __mul__


def _check_same_grid(u, v):
    if u.dt != v.dt or u.samples.shape != v.samples.shape:
        raise DimensionError("signals live on different grids")


def grid_steps(t, dt):
    """Number of steps ``t / dt``; raises unless ``t`` lies on the grid."""
    k = round(t / dt)
    if k < 0 or abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise GridAlignmentError(f"t = {t} is not a nonnegative multiple of dt = {dt}")
    return int(k)


def _x0(sys, x0):
    if x0 is None:
        return np.zeros(sys.n_states)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != sys.n_states:
        raise DimensionError(f"x0 has dimension {x0.shape[0]}, expected {sys.n_states}")
    return x0


def _input(sys, u, steps):
    if u.dim != sys.n_inputs:
        raise DimensionError(f"input has dimension {u.dim}, system expects {sys.n_inputs}")
    if len(u) < steps:
        raise GridAlignmentError(f"input has {len(u)} samples, need {steps}")
    return u.samples[:steps]


def _run(ad, drive, x0):
    """States of ``x[k+1] = ad x[k] + drive[k]`` at grid points 0..K."""
    xs = np.empty((drive.shape[0] + 1, ad.shape[0]))
    xs[0] = x0
    for k in range(drive.shape[0]):
        xs[k + 1] = ad @ xs[k] + drive[k]
    return xs


def state_trajectory(sys, x0, u, steps):
    ad, bd = zoh_discretize(sys.a, sys.b, u.dt)
    return _run(ad, _input(sys, u, steps) @ bd.T, _x0(sys, x0))


def state_map(sys, x0, u, t):
    """State ``x(t) = T(t) x0 + Phi(t) u`` for a grid-aligned ``t``."""
    steps = grid_steps(t, u.dt)
    return state_trajectory(sys, x0, u, steps)[-1]


def io_map(sys, u, horizon=None, x0=None):
    """Output samples ``y(k dt) = C x(k dt) + D u(k dt)`` for ``k = 0..horizon/dt``."""
    steps = len(u) - 1 if horizon is None else grid_steps(horizon, u.dt)
    uk = _input(sys, u, steps + 1)
    xs = state_trajectory(sys, x0, u, steps)
    return SampledSignal(u.dt, xs @ sys.c.T + uk @ sys.d.T)


def observation_map(sys, x0, horizon, dt):
    """Samples of ``C exp(A s) x0`` on ``s = 0, dt, ..., horizon``."""
    steps = grid_steps(horizon, dt)
    ad = mat_exp(sys.a, dt)
    xs = _run(ad, np.zeros((steps, sys.n_states)), _x0(sys, x0))
    return SampledSignal(dt, xs @ sys.c.T)


def feedback_close(sys, gamma):
    """Close the loop ``u = v + gamma y`` around ``sys``.

    Returns the system from ``v`` to ``y``; ``I - D gamma`` must be invertible.
    """
    gamma = as_matrix(gamma, "gamma")
    if gamma.shape != (sys.n_inputs, sys.n_outputs):
        raise DimensionError(f"gamma must be {(sys.n_inputs, sys.n_outputs)}, got {gamma.shape}")
    if not np.any(gamma):
        return sys
    try:
        k = inverse(np.eye(sys.n_outputs) - sys.d @ gamma)
    except SingularMatrixError as exc:
        raise AdmissibilityError("I - D gamma is singular: gamma is not an admissible feedback") from exc
    bg = sys.b @ gamma
    return StateSpaceSystem(
        a=sys.a + bg @ k @ sys.c,
        b=sys.b + bg @ k @ sys.d,
        c=k @ sys.c,
        d=k @ sys.d,
    )


# ---------------------------------------------------------------------------
# cell-average evaluation


def _cell_operators(a, b, dt):
    """Return ``(ad, bd, phi_bar, gam_bar)``.

    Over one hold interval starting from state ``x`` with input ``v``, the end
    state is ``ad x + bd v`` and the mean state is ``phi_bar x + gam_bar v``.
    """
    n, m = b.shape
    size = n + m
    big = np.zeros((2 * size, 2 * size))
    big[:n, :n] = a
    big[:n, n:size] = b
    big[:size, size:] = np.eye(size)
    e = mat_exp(big, dt)
    step, mean = e[:n, :size], e[:n, size:size + size] / dt
    return step[:, :n], step[:, n:], mean[:, :n], mean[:, n:]


def cell_average_map(sys, u, x0=None):
    """Mean of ``y = C x + D u`` over each hold interval of ``u``."""
    ad, bd, phi, gam = _cell_operators(sys.a, sys.b, u.dt)
    uk = _input(sys, u, len(u))
    xs = _run(ad, uk @ bd.T, _x0(sys, x0))
    y = xs[:-1] @ (sys.c @ phi).T + uk @ (sys.c @ gam + sys.d).T
    return SampledSignal(u.dt, y)


def cell_state_map(sys, u, x0=None):
    """States at the grid points ``0, dt, ..., len(u) dt`` (exact for held ``u``)."""
    return state_trajectory(sys, x0, u, len(u))


def cell_resolvent_map(sys, g):
    """Solve ``v = g + F v`` for ``v`` in the cell convention, i.e. ``(I - F)^-1 g``.

    Each interval gives ``(I - C gam_bar - D) v_k = g_k + C phi_bar x_k``, so the
    solve is a linear recursion on the state.
    """
    if sys.n_inputs != sys.n_outputs:
        raise DimensionError("I - F needs as many outputs as inputs")
    ad, bd, phi, gam = _cell_operators(sys.a, sys.b, g.dt)
    gk = _input(sys, g, len(g))
    try:
        k = inverse(np.eye(sys.n_inputs) - sys.c @ gam - sys.d)
    except SingularMatrixError as exc:
        raise AdmissibilityError("I - F is not invertible on this grid") from exc
    feed = k @ sys.c @ phi
    xs = _run(ad + bd @ feed, gk @ (bd @ k).T, np.zeros(sys.n_states))
    return SampledSignal(g.dt, xs[:-1] @ feed.T + gk @ k.T)


def richardson(evaluate, u, kind="cells"):
    """Second-order Richardson extrapolation of a held-signal pipeline.

    ``evaluate`` maps a held input to an array; it is run on the grid of ``u``
    and on the grid twice as fine. ``kind`` says how to bring the fine result
    back: ``"cells"`` averages neighbouring intervals, ``"points"`` keeps every
    other grid point.
    """
    coarse = evaluate(u)
    fine = evaluate(u.refined(2))
    if kind == "cells":
        fine = 0.5 * (fine[0::2] + fine[1::2])
    elif kind == "points":
        fine = fine[0::2]
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return (4.0 * fine - coarse) / 3.0


@dataclass(frozen=True)
class IdentityResidualReport:
    identity: str
    sup_residual: float
    relative_residual: float
    dt: float
    horizon: float
    trial: int = 0
    extra: dict = field(default_factory=dict, compare=False)


def _report(name, left, right, dt, horizon, trial):
    sup = float(np.abs(left - right).max()) if left.size else 0.0
    scale = float(np.abs(left).max()) if left.size else 0.0
    rel = sup / scale if scale > 0 else sup
    return IdentityResidualReport(name, sup, rel, dt, horizon, trial)


def _random_perturbed_trial(rng, dims, growth_cap=1e3, horizon=2.0, scale=1.0):
    lo, hi = dims
    for _ in range(100):
        n = int(rng.integers(lo, hi + 1))
        m = int(rng.integers(1, n + 1))
        p = int(rng.integers(1, n + 1))
        a = rng.uniform(-1, 1, (n, n))
        b = rng.uniform(-1, 1, (n, m))
        c = rng.uniform(-1, 1, (p, n))
        pert = rng.uniform(-1, 1, (n, n))
        pert *= scale / max(1.0, np.linalg.norm(pert, 2))
        if np.linalg.norm(mat_exp(a + pert, horizon), 2) <= growth_cap:
            return a, b, c, pert
    raise ConvergenceError("could not draw a system within the growth cap")


PERTURBATION_IDENTITIES = ("Frelation", "teshu", "main", "phiab")


def _perturbation_trial(seed, trial, dims, dt, horizon, extrapolate, refine, scale):
    rng = np.random.default_rng([seed, trial])
    a, b, c, pert = _random_perturbed_trial(rng, dims, horizon=horizon, scale=scale)
    n, m, p = a.shape[0], b.shape[1], c.shape[0]
    cells = grid_steps(horizon, dt)
    u = SampledSignal(dt, rng.uniform(-1, 1, (cells, m))).refined(refine)
    g = SampledSignal(dt, rng.uniform(-1, 1, (cells, n))).refined(refine)
    eye = np.eye(n)

    perturbed = StateSpaceSystem(a + pert, b, c)
    perturbed_i = StateSpaceSystem(a + pert, eye, c)
    sys_bc = StateSpaceSystem(a, b, c)
    sys_bp = StateSpaceSystem(a, b, pert)
    sys_ic = StateSpaceSystem(a, eye, c)
    sys_ip = StateSpaceSystem(a, eye, pert)
    sys_ix = StateSpaceSystem(a, eye, eye)

    def cells_of(system, signal):
        return cell_average_map(system, signal).samples

    def frelation_right(v):
        return cells_of(perturbed_i, cell_average_map(sys_bp, v)) + cells_of(sys_bc, v)

    def teshu_right(v):
        return cells_of(sys_ic, cell_resolvent_map(sys_ip, v))

    def main_right(v):
        inner = cell_resolvent_map(sys_ip, cell_average_map(sys_bp, v))
        return cells_of(sys_ic, inner) + cells_of(sys_bc, v)

    def phiab_left(v):
        return cell_state_map(StateSpaceSystem(a + pert, b, np.eye(n)), v)

    def phiab_right(v):
        inner = cell_resolvent_map(sys_ip, cell_average_map(sys_bp, v))
        return cell_state_map(sys_ix, inner) + cell_state_map(StateSpaceSystem(a, b, eye), v)

    cases = {
        "Frelation": (lambda v: cells_of(perturbed, v), frelation_right, u, "cells"),
        "teshu": (lambda v: cells_of(perturbed_i, v), teshu_right, g, "cells"),
        "main": (lambda v: cells_of(perturbed, v), main_right, u, "cells"),
        "phiab": (phiab_left, phiab_right, u, "points"),
    }
    reports = []
    for name in PERTURBATION_IDENTITIES:
        left_fn, right_fn, signal, kind = cases[name]
        if extrapolate:
            left = richardson(left_fn, signal, kind)
            right = richardson(right_fn, signal, kind)
        else:
            left, right = left_fn(signal), right_fn(signal)
        rep = _report(name, left, right, signal.dt, horizon, trial)
        reports.append(
            IdentityResidualReport(
                rep.identity, rep.sup_residual, rep.relative_residual, rep.dt, rep.horizon, trial,
                extra={"n": n, "m": m, "p": p, "perturbation_norm": float(np.linalg.norm(pert, 2))},
            )
        )
    return reports


def verify_perturbation_identities(
    dims=(1, 5), trials=20, seed=0, dt=1e-3, horizon=2.0, extrapolate=True, refine=1, jobs=1,
    perturbation_scale=1.0,
):
    """Check the perturbation identities on random systems.

    For random ``(A, B, C)`` and a perturbation ``P`` with ``||P|| <= 1`` the
    identities compared are

    * ``Frelation``: ``F[A+P,B,C] = F[A+P,I,C] F[A,B,P] + F[A,B,C]``
    * ``teshu``:     ``F[A+P,I,C] = F[A,I,C] (I - F[A,I,P])^-1``
    * ``main``:      ``F[A+P,B,C] = F[A,I,C] (I - F[A,I,P])^-1 F[A,B,P] + F[A,B,C]``
    * ``phiab``:     ``Phi[A+P,B] = Phi[A,I] (I - F[A,I,P])^-1 F[A,B,P] + Phi[A,B]``

    Left sides run the perturbed generator directly; right sides chain the
    unperturbed maps through held intermediate signals, which costs an
    ``O(dt^2)`` composition error. With ``extrapolate`` both sides go through
    one Richardson step, leaving roundoff. ``refine`` evaluates on a grid
    ``refine`` times finer than ``dt`` while keeping the same random inputs,
    which is how the order of the raw composition error is measured.
    ``perturbation_scale`` multiplies every drawn ``P`` (0 gives ``P = 0``).

    Returns one report per (trial, identity), ordered by trial.
    """
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    if not dt > 0 or not horizon > 0:
        raise PreconditionError("dt and horizon must be positive")
    if horizon / dt < 100:
        raise PreconditionError("need horizon / dt >= 100")
    lo, hi = dims
    if not 1 <= lo <= hi:
        raise PreconditionError(f"bad dimension range {dims}")

    def work(trial):
        return _perturbation_trial(seed, trial, (lo, hi), dt, horizon, extrapolate, refine, perturbation_scale)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            per_trial = list(pool.map(work, range(trials)))
    else:
        per_trial = [work(t) for t in range(trials)]
    return [rep for reps in per_trial for rep in reps]


def worst_by_identity(reports):
    worst = {}
    for rep in reports:
        if rep.identity not in worst or rep.relative_residual > worst[rep.identity].relative_residual:
            worst[rep.identity] = rep
    return worst


SYSTEM_AXIOMS = ("control_cocycle", "observation_shift", "io_composition")


def verify_system_axioms(sys=None, dt=1e-3, t=1.0, tau=1.0, trials=1, seed=0, dims=(1, 1)):
    """Residuals of the three composition laws of a well-posed system.

    * control cocycle: ``Phi(t+tau) u = T(t) Phi(tau) u + Phi(t) u(tau + .)``
    * observation shift: ``(Psi(t+tau) x)(s) = (Psi(t) T(tau) x)(s - tau)`` on ``[tau, t+tau]``
    * I/O composition: ``(F(t+tau) u)(s) = (Psi(t) Phi(tau) u + F(t) u(tau + .))(s - tau)``

    When ``sys`` is None each trial draws a random system with state
    dimension in ``dims``; inputs and initial states are always random.
    """
    k_t, k_tau = grid_steps(t, dt), grid_steps(tau, dt)
    reports = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial, 1])
        system = sys
        if system is None:
            n = int(rng.integers(dims[0], dims[1] + 1))
            m, p = int(rng.integers(1, n + 1)), int(rng.integers(1, n + 1))
            system = StateSpaceSystem(
                rng.uniform(-1, 1, (n, n)), rng.uniform(-1, 1, (n, m)),
                rng.uniform(-1, 1, (p, n)), rng.uniform(-1, 1, (p, m)),
            )
        u = SampledSignal(dt, rng.uniform(-1, 1, (k_t + k_tau + 1, system.n_inputs)))
        x0 = rng.uniform(-1, 1, system.n_states)
        zero = np.zeros(system.n_states)

        left = state_map(system, zero, u, t + tau)
        right = mat_exp(system.a, t) @ state_map(system, zero, u, tau) + state_map(system, zero, u.shifted(k_tau), t)
        reports.append(_report("control_cocycle", left, right, dt, t + tau, trial))

        left = observation_map(system, x0, t + tau, dt).samples[k_tau:]
        right = observation_map(system, mat_exp(system.a, tau) @ x0, t, dt).samples
        reports.append(_report("observation_shift", left, right, dt, t + tau, trial))

        left = io_map(system, u, t + tau).samples[k_tau:]
        x_tau = state_map(system, zero, u, tau)
        right = observation_map(system, x_tau, t, dt).samples + io_map(system, u.shifted(k_tau), t).samples
        reports.append(_report("io_composition", left, right, dt, t + tau, trial))
    return reports
