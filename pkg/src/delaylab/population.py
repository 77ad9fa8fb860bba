"""Age-structured population with delayed death, harvesting and birth.

    w_t + w_a = -mu(a) w(t, a) - alpha(a) w(t - r, a) - eta(a) q(t - r, a)
    w(t, 0)   = B(t)

with one of two birth laws

    B1:  B(t) = int_0^inf int_{-r}^0 beta1(s, a) w(t + s, a) ds da
    B2:  B(t) = int_0^inf beta2(a) w(t - r, a) da

The scheme uses ``dt = da`` so transport is an exact index shift along
characteristics. Natural death is integrated exactly, the delayed death and
harvest terms by explicit Euler. Mass passing ``a_max`` leaves the domain.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigError, PreconditionError, SimulationOverflowError

Rate = Union[float, Sequence[float], np.ndarray, Callable]

_OVERFLOW = 1e300


def _integral_ratio(x, step):
    k = round(x / step)
    if k < 0 or abs(k * step - x) > 1e-9 * max(1.0, x):
        return None
    return int(k)


def trapezoid_weights(count, step):
    if count == 1:
        return np.zeros(1)
    w = np.full(count, float(step))
    w[0] = w[-1] = step / 2
    return w


@dataclass(frozen=True)
class AgePopulationModel:
    a_max: float
    n_age: int
    r: float
    mu: np.ndarray
    alpha: np.ndarray
    eta: np.ndarray
    birth_law: str
    beta: np.ndarray  # B2: (n_age + 1,), B1: (k + 1, n_age + 1) over sigma = -r .. 0
    mu_inf: float
    history: np.ndarray  # (k + 1, n_age + 1), oldest slot first

    @property
    def dt(self):
        return self.a_max / self.n_age

    @property
    def delay_steps(self):
        return round(self.r / self.dt)

    @property
    def ages(self):
        return np.linspace(0.0, self.a_max, self.n_age + 1)

    @property
    def sigmas(self):
        return -self.r + self.dt * np.arange(self.delay_steps + 1)

    @property
    def age_weights(self):
        return trapezoid_weights(self.n_age + 1, self.dt)

    @property
    def sigma_weights(self):
        return trapezoid_weights(self.delay_steps + 1, self.dt)

    @property
    def positivity_step_ok(self):
        """Whether ``dt * max(alpha) <= 1``, the step restriction for positivity."""
        return bool(self.dt * self.alpha.max() <= 1.0)

    @property
    def birth_self_weight(self):
        """Quadrature weight of the unknown newborn density in its own birth integral."""
        wa0 = self.age_weights[0]
        if self.birth_law == "B2":
            return float(self.beta[0] * wa0) if self.delay_steps == 0 else 0.0
        return float(self.sigma_weights[-1] * self.beta[-1, 0] * wa0)

    def with_history(self, history):
        return replace(self, history=_history_table(history, self.n_age, self.delay_steps, self.dt, self.r))


@dataclass
class ModelConfig:
    """User-facing model description; rates may be constants, tables or callables of age."""

    a_max: float
    n_age: int
    r: float
    mu: Rate
    alpha: Rate = 0.0
    eta: Rate = 0.0
    birth_law: str = "B2"
    beta: Union[Rate, Callable] = 0.0
    mu_inf: float | None = None
    history: object = None
    dt: float | None = None


def _rate_table(value, ages, name):
    if callable(value):
        table = np.array([value(a) for a in ages], dtype=float)
    else:
        arr = np.asarray(value, dtype=float)
        table = np.full(ages.shape, float(arr)) if arr.ndim == 0 else arr
    if table.shape != ages.shape:
        raise ConfigError(f"{name} table has shape {table.shape}, expected {ages.shape}")
    if not np.all(np.isfinite(table)) or np.any(table < 0):
        raise ConfigError(f"{name} must be finite and nonnegative")
    return table


def _beta_table(law, value, ages, sigmas):
    if law == "B2":
        return _rate_table(value, ages, "beta")
    if callable(value):
        table = np.array([[value(s, a) for a in ages] for s in sigmas], dtype=float)
    else:
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            table = np.full((len(sigmas), len(ages)), float(arr))
        elif arr.ndim == 1:
            table = np.broadcast_to(arr, (len(sigmas), len(ages))).copy() if arr.shape == ages.shape else arr
        else:
            table = arr
    if table.shape != (len(sigmas), len(ages)):
        raise ConfigError(f"beta table has shape {table.shape}, expected {(len(sigmas), len(ages))}")
    if not np.all(np.isfinite(table)) or np.any(table < 0):
        raise ConfigError("beta must be finite and nonnegative")
    return table


def _history_table(value, n_age, k, dt, r):
    ages = np.linspace(0.0, n_age * dt, n_age + 1)
    sigmas = -r + dt * np.arange(k + 1)
    shape = (k + 1, n_age + 1)
    if value is None:
        table = np.zeros(shape)
    elif callable(value):
        table = np.array([[value(s, a) for a in ages] for s in sigmas], dtype=float)
    else:
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            table = np.full(shape, float(arr))
        elif arr.ndim == 1:
            if arr.shape != (n_age + 1,):
                raise ConfigError(f"history profile must have {n_age + 1} entries, got {arr.shape}")
            table = np.tile(arr, (k + 1, 1))
        else:
            table = arr
    if table.shape != shape:
        raise ConfigError(f"history table has shape {table.shape}, expected {shape}")
    if not np.all(np.isfinite(table)):
        raise ConfigError("history must be finite")
    return np.array(table, dtype=float)


def build_model(config: ModelConfig) -> AgePopulationModel:
    """Validate ``config`` and sample every rate on the age grid."""
    if not config.a_max > 0 or int(config.n_age) != config.n_age or config.n_age < 2:
        raise ConfigError("need a_max > 0 and integer n_age >= 2")
    n_age = int(config.n_age)
    dt = config.a_max / n_age
    if config.dt is not None and abs(config.dt - dt) > 1e-12 * dt:
        raise ConfigError(f"dt = {config.dt} differs from the age step {dt}; the scheme needs dt = da")
    if config.r < 0:
        raise ConfigError("delay must be nonnegative")
    k = _integral_ratio(config.r, dt)
    if k is None:
        raise ConfigError(f"delay r = {config.r} is not an integer multiple of dt = {dt}")
    if config.birth_law not in ("B1", "B2"):
        raise ConfigError(f"unknown birth law {config.birth_law!r}")
    ages = np.linspace(0.0, config.a_max, n_age + 1)
    sigmas = -config.r + dt * np.arange(k + 1)
    mu = _rate_table(config.mu, ages, "mu")
    mu_inf = float(mu[-1] if config.mu_inf is None else config.mu_inf)
    if not mu_inf > 0:
        raise ConfigError("mu_inf must be positive")
    built = AgePopulationModel(
        a_max=float(config.a_max),
        n_age=n_age,
        r=float(config.r),
        mu=mu,
        alpha=_rate_table(config.alpha, ages, "alpha"),
        eta=_rate_table(config.eta, ages, "eta"),
        birth_law=config.birth_law,
        beta=_beta_table(config.birth_law, config.beta, ages, sigmas),
        mu_inf=mu_inf,
        history=_history_table(config.history, n_age, k, dt, config.r),
    )
    if built.birth_self_weight >= 1.0:
        raise ConfigError(
            f"newborn self-weight {built.birth_self_weight:g} >= 1 makes the birth update singular; refine the age grid"
        )
    return built


@dataclass(frozen=True)
class HarvestInput:
    """Harvest intensity ``q`` on the delayed time grid: row ``i`` is ``q(-r + i dt, .)``."""

    values: np.ndarray

    @classmethod
    def separable(cls, model, time_factor, age_factor, steps):
        times = -model.r + model.dt * np.arange(steps)
        tf = np.array([time_factor(t) for t in times]) if callable(time_factor) else np.broadcast_to(
            np.asarray(time_factor, dtype=float), times.shape)
        af = _signed_profile(age_factor, model.ages)
        return cls(np.outer(tf, af))

    def scaled(self, c):
        return HarvestInput(c * self.values)

    def l1_norm(self, model):
        return float(np.sum(np.abs(self.values) @ model.age_weights) * model.dt)


def _signed_profile(value, ages):
    if callable(value):
        return np.array([value(a) for a in ages], dtype=float)
    arr = np.asarray(value, dtype=float)
    return np.full(ages.shape, float(arr)) if arr.ndim == 0 else arr


@dataclass
class PopulationState:
    t: float
    history: np.ndarray  # (k + 1, n_age + 1), oldest first; last row is w(t, .)
    step_index: int = 0

    @property
    def profile(self):
        return self.history[-1]


def initial_state(model):
    return PopulationState(0.0, model.history.copy(), 0)


def birth_eval(model, history):
    """Birth rate ``B`` for a full history ring (oldest slot first)."""
    if model.birth_law == "B2":
        return float(np.dot(model.beta * model.age_weights, history[0]))
    return float(np.einsum("i,ij,j,ij->", model.sigma_weights, model.beta, model.age_weights, history))


def _birth_split(model, history_wo_new_birth):
    """Return ``(explicit, self_weight)`` so that ``B = explicit / (1 - self_weight)``.

    The newest slot's age-0 entry is the unknown ``B`` itself; with it set to
    zero the quadrature gives ``explicit`` and its own coefficient is
    ``self_weight``.
    """
    explicit = birth_eval(model, history_wo_new_birth)
    return explicit, model.birth_self_weight


def _advance(model, history, q_delayed, decay):
    """New profile at ``t + dt`` (age-0 entry left at 0)."""
    current, delayed = history[-1], history[0]
    new = np.empty_like(current)
    new[0] = 0.0
    drain = model.alpha[:-1] * delayed[:-1]
    if q_delayed is not None:
        drain = drain + model.eta[:-1] * q_delayed[:-1]
    new[1:] = current[:-1] * decay - model.dt * drain
    return new


def step(model, state, q_delayed=None):
    """One ``dt`` update; ``q_delayed`` is ``q(t - r, .)`` when harvesting."""
    decay = np.exp(-model.mu[:-1] * model.dt)
    new = _advance(model, state.history, q_delayed, decay)
    ring = np.vstack([state.history[1:], new]) if model.delay_steps else new[None, :]
    explicit, self_weight = _birth_split(model, ring)
    ring[-1, 0] = explicit / (1.0 - self_weight)
    return PopulationState(state.t + model.dt, ring, state.step_index + 1)


@dataclass
class Trajectory:
    times: np.ndarray
    total_population: np.ndarray
    birth_rate: np.ndarray
    snapshots: list = field(default_factory=list)  # (t, profile) pairs
    min_value: float = 0.0
    final_profile: np.ndarray | None = None

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "total_population", "birth_rate"])
            for row in zip(self.times, self.total_population, self.birth_rate):
                out.writerow([repr(float(v)) for v in row])

    def write_snapshots(self, prefix, ages):
        paths = []
        for t, profile in self.snapshots:
            path = f"{prefix}_t{t:.6f}.csv"
            with open(path, "w", newline="") as fh:
                out = csv.writer(fh)
                out.writerow(["a", "w"])
                for a, w in zip(ages, profile):
                    out.writerow([repr(float(a)), repr(float(w))])
            paths.append(path)
        return paths


def simulate(model, t_max, harvest: HarvestInput | None = None, snapshot_stride=0):
    """Run the scheme to ``t_max`` and record total population and births.

    ``snapshot_stride > 0`` stores the profile every that many steps.
    Raises ``SimulationOverflowError`` once values leave the float range.
    """
    if not t_max > model.r:
        raise PreconditionError(f"t_max = {t_max} must exceed the delay {model.r}")
    steps = _integral_ratio(t_max, model.dt)
    if steps is None:
        raise PreconditionError(f"t_max = {t_max} is not a multiple of dt = {model.dt}")
    if harvest is not None and harvest.values.shape[0] < steps:
        raise PreconditionError(f"harvest covers {harvest.values.shape[0]} steps, need {steps}")

    k = model.delay_steps
    size = k + 1
    ring = model.history.copy()
    head = 0  # index of the oldest slot
    decay = np.exp(-model.mu[:-1] * model.dt)
    wa = model.age_weights
    ws = model.sigma_weights
    self_weight = model.birth_self_weight
    if model.birth_law == "B2":
        beta_w = model.beta * wa
    else:
        beta_w = model.beta * wa[None, :] * ws[:, None]

    times = model.dt * np.arange(steps + 1)
    total = np.empty(steps + 1)
    births = np.empty(steps + 1)
    total[0] = wa @ ring[-1]
    births[0] = ring[-1, 0]
    snapshots = [(0.0, ring[-1].copy())] if snapshot_stride else []
    lowest = float(ring.min())
    new = np.empty(model.n_age + 1)
    for n in range(steps):
        newest = ring[(head + k) % size]
        delayed = ring[head]
        drain = model.alpha[:-1] * delayed[:-1]
        if harvest is not None:
            drain = drain + model.eta[:-1] * harvest.values[n, :-1]
        new[0] = 0.0
        np.multiply(newest[:-1], decay, out=new[1:])
        new[1:] -= model.dt * drain
        # rotate: the oldest slot is overwritten by the new profile
        ring[head] = new
        head = (head + 1) % size
        if model.birth_law == "B2":
            explicit = beta_w @ ring[head]
        else:
            order = (head + np.arange(size)) % size
            explicit = float(np.sum(beta_w * ring[order]))
        birth = explicit / (1.0 - self_weight)
        latest = ring[(head + k) % size]
        latest[0] = birth
        if not np.all(np.isfinite(latest)) or np.abs(latest).max() > _OVERFLOW:
            raise SimulationOverflowError(
                f"profile left the float range at t = {times[n + 1]:g}", last_valid_time=float(times[n])
            )
        lowest = min(lowest, float(latest.min()))
        total[n + 1] = wa @ latest
        births[n + 1] = birth
        if snapshot_stride and (n + 1) % snapshot_stride == 0:
            snapshots.append((float(times[n + 1]), latest.copy()))
    final = ring[(head + k) % size].copy()
    return Trajectory(times, total, births, snapshots, lowest, final)


@dataclass(frozen=True)
class GainReport:
    gain: float
    probe: int
    gains: tuple


def random_harvest_probe(model, steps, seed, probe, modes=3):
    """Nonnegative smooth harvest intensity, identical as a function for every grid."""
    rng = np.random.default_rng([seed, probe])
    amp = rng.uniform(0.1, 1.0, modes)
    omega = rng.uniform(0.0, 2.0, modes)
    phase_t = rng.uniform(0, 2 * np.pi, modes)
    kappa = rng.uniform(0.0, 1.0, modes)
    phase_a = rng.uniform(0, 2 * np.pi, modes)
    times = -model.r + model.dt * np.arange(steps)
    ft = 1.0 + np.cos(np.outer(times, omega) + phase_t)  # steps x modes
    fa = 1.0 + np.cos(np.outer(kappa, model.ages) + phase_a[:, None])  # modes x ages
    return HarvestInput((ft * amp) @ fa)


def input_gain(model, t_max, probes=10, seed=0):
    """Empirical ``sup ||w(t_max)||_1 / ||q||_1`` over random nonnegative harvest probes.

    The initial history is set to zero so only the harvest drives the state.
    """
    quiet = model.with_history(None)
    steps = _integral_ratio(t_max, model.dt)
    if steps is None:
        raise PreconditionError(f"t_max = {t_max} is not a multiple of dt = {model.dt}")
    gains = []
    for i in range(probes):
        q = random_harvest_probe(quiet, steps, seed, i)
        traj = simulate(quiet, t_max, q)
        norm_q = q.l1_norm(quiet)
        state = float(np.abs(traj.final_profile) @ quiet.age_weights)
        gains.append(state / norm_q if norm_q > 0 else 0.0)
    best = int(np.argmax(gains))
    return GainReport(float(gains[best]), best, tuple(gains))
