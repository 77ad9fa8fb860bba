"""Characteristic functions of the delayed population model and stability checks.

For real ``lam > -mu_inf`` let

    f(a) = exp(-int_0^a (lam + mu(s) + exp(-lam r) alpha(s)) ds)

Then ``lam`` is an eigenvalue of the generator exactly when the matching
characteristic function vanishes:

    xi1(lam) = -1 + int int beta1(s, a) exp(lam s) f(a) ds da
    xi2(lam) = -1 + int beta2(a) f(a) exp(-lam r) da

Both are strictly decreasing in ``lam`` for nonnegative rates and tend to -1
as ``lam`` grows, so the sign of ``xi(0)`` decides the sign of the growth
bound. Integrals are trapezoid sums on the model's own age and delay grids.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, FitError, PreconditionError
from .population import AgePopulationModel, simulate

CRITICAL_BAND = 1e-9
SIMULATED_CRITICAL_BAND = 0.02
ROOT_TOL = 1e-10
_ROOT_CAP = 1e4


@dataclass(frozen=True)
class CharacteristicEvaluator:
    model: AgePopulationModel
    margin: float = 1e-6

    @property
    def which(self):
        return "xi1" if self.model.birth_law == "B1" else "xi2"

    def _check(self, lam):
        if not lam > -self.model.mu_inf + self.margin:
            raise DomainError(f"lambda = {lam} is outside (-mu_inf, inf) with mu_inf = {self.model.mu_inf}")

    def kernel(self, lam):
        """``f`` on the age grid."""
        m = self.model
        rate = lam + m.mu + np.exp(-lam * m.r) * m.alpha
        exponent = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * m.dt)])
        return np.exp(-exponent)

    def xi1(self, lam):
        self._check(lam)
        m = self.model
        if m.birth_law != "B1":
            raise PreconditionError("xi1 needs a B1 (distributed delay) birth law")
        f = self.kernel(lam)
        sigma_part = m.sigma_weights * np.exp(lam * m.sigmas)
        return float(-1.0 + sigma_part @ m.beta @ (m.age_weights * f))

    def xi2(self, lam):
        self._check(lam)
        m = self.model
        if m.birth_law != "B2":
            raise PreconditionError("xi2 needs a B2 (point delay) birth law")
        f = self.kernel(lam)
        return float(-1.0 + np.exp(-lam * m.r) * np.dot(m.beta * m.age_weights, f))

    def xi(self, lam, which=None):
        return self.xi1(lam) if (which or self.which) == "xi1" else self.xi2(lam)

    __call__ = xi


def resolvent_kernel(model, lam, a_index):
    """``f(a_j)``; with ``alpha = 0`` this is ``exp(-int_0^a (lam + mu))``."""
    evaluator = CharacteristicEvaluator(model)
    evaluator._check(lam)
    return float(evaluator.kernel(lam)[a_index])


def xi1(model, lam):
    return CharacteristicEvaluator(model).xi1(lam)


def xi2(model, lam):
    return CharacteristicEvaluator(model).xi2(lam)


def is_strictly_decreasing(evaluator, which=None, lo=None, hi=5.0, spacing=0.1):
    lo = -evaluator.model.mu_inf / 2 if lo is None else lo
    grid = np.arange(lo, hi + spacing / 2, spacing)
    values = np.array([evaluator.xi(x, which) for x in grid])
    return bool(np.all(np.diff(values) < 0))


def _bisect(f, a, b, fa):
    sa = np.sign(fa)
    while b - a > ROOT_TOL:
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == sa:
            a = mid
        else:
            b = mid
    return float(0.5 * (a + b))


def dominant_real_root(evaluator, which=None, scan_step=0.05):
    """Largest real zero of ``xi`` above ``-mu_inf``, or None.

    The upper end of the bracket doubles until ``xi < 0``. If ``xi`` is not
    monotone on the bracket the rightmost sign change of a scan is used.
    """
    f = lambda x: evaluator.xi(x, which)  # noqa: E731
    lo = -evaluator.model.mu_inf + 2 * evaluator.margin
    f_lo = f(lo)
    hi = max(lo + 1.0, 1.0)
    while f(hi) > 0:
        hi = lo + 2 * (hi - lo)
        if hi > _ROOT_CAP:
            return None
    grid = np.linspace(lo, hi, max(3, int(np.ceil((hi - lo) / scan_step)) + 1))
    values = np.array([f(x) for x in grid])
    if np.all(np.diff(values) < 0):
        if f_lo < 0:
            return None
        i = int(np.argmax(values < 0))
        return _bisect(f, grid[i - 1], grid[i], values[i - 1])
    for i in range(len(grid) - 1, 0, -1):
        if values[i] == 0.0:
            return float(grid[i])
        if np.sign(values[i]) != np.sign(values[i - 1]):
            return _bisect(f, grid[i - 1], grid[i], values[i - 1])
    return None


@dataclass
class SpectralReport:
    xi_at_zero: float
    dominant_root: float | None
    stability_class: str
    sufficient_condition_holds: bool
    measured_growth: float | None = None
    agreement: float | None = None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def survival_integral(model):
    """``int_0^inf exp(-int_0^a mu)`` with ``mu = mu_inf`` past ``a_max``."""
    m = model
    exponent = np.concatenate([[0.0], np.cumsum(0.5 * (m.mu[1:] + m.mu[:-1]) * m.dt)])
    survival = np.exp(-exponent)
    return float(m.age_weights @ survival + survival[-1] / m.mu_inf)


def birth_bound(model):
    """Sup norm of the birth kernel; for B1 the sup over age of its delay integral."""
    if model.birth_law == "B2":
        return float(model.beta.max())
    return float((model.sigma_weights @ model.beta).max())


def sufficient_condition(model):
    return birth_bound(model) * survival_integral(model) < 1.0


def classify_value(value, band):
    if abs(value) <= band:
        return "critical"
    return "stable" if value < 0 else "unstable"


def classify_stability(evaluator, which=None):
    xi0 = evaluator.xi(0.0, which)
    return SpectralReport(
        xi_at_zero=xi0,
        dominant_root=dominant_real_root(evaluator, which),
        stability_class=classify_value(xi0, CRITICAL_BAND),
        sufficient_condition_holds=sufficient_condition(evaluator.model),
    )


def critical_birth_scale(evaluator, which=None):
    """Factor ``c`` such that scaling the birth kernel by ``c`` gives ``xi(0) = 0``."""
    return 1.0 / (evaluator.xi(0.0, which) + 1.0)


def growth_rate_fit(traj, discard_fraction=0.5):
    """Least-squares slope of ``log(total_population)`` over the retained tail."""
    if not 0 <= discard_fraction < 1:
        raise PreconditionError("discard_fraction must be in [0, 1)")
    start = int(discard_fraction * len(traj.times))
    t = traj.times[start:]
    y = traj.total_population[start:]
    if len(t) < 2:
        raise FitError("fit window has fewer than two samples")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise FitError("total population is not positive on the fit window")
    return float(np.polyfit(t, np.log(y), 1)[0])


def agreement(measured, root):
    if root is None:
        return None
    return abs(measured - root) / max(abs(root), 0.05)


def cross_check(model, t_max, discard_fraction=0.5):
    """Simulate, fit the growth rate, and compare against the characteristic root."""
    if (1 - discard_fraction) * t_max < 10 * model.r:
        raise PreconditionError("fit window must span at least ten delays")
    evaluator = CharacteristicEvaluator(model)
    report = classify_stability(evaluator)
    measured = growth_rate_fit(simulate(model, t_max), discard_fraction)
    report.measured_growth = measured
    report.agreement = agreement(measured, report.dominant_root)
    return report


def signs_agree(report):
    """Trichotomy check between ``xi(0)`` and the measured growth."""
    if report.measured_growth is None:
        return True
    near_zero = report.stability_class == "critical" or (
        report.dominant_root is not None and abs(report.dominant_root) <= SIMULATED_CRITICAL_BAND
    )
    if near_zero:
        # the scheme's O(dt) growth error cannot resolve the sign of such roots
        return abs(report.measured_growth) <= SIMULATED_CRITICAL_BAND
    measured = classify_value(report.measured_growth, 0.0)
    return measured == report.stability_class
