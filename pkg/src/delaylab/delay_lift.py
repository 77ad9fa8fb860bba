"""Delay systems lifted to larger undelayed systems.

The delay equation

    w'(t) = a0 w(t) + a1 w(t - r) + int_{-r}^0 K(theta) w(t + theta) dtheta

is rewritten as a transport equation for the history ``x(t, theta) = w(t + theta)``,
``dx/dt = dx/dtheta`` on ``[-r, 0]`` with inflow ``x(t, 0) = w(t)``, coupled to
the head equation for ``w``. The history is discretized by first-order upwind
differences on ``big_n + 1`` uniform nodes ``theta_j = -r + j h``; node
``big_n`` is ``w`` itself.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, SingularMatrixError, SpectrumError
from .matrix_core import as_matrix, dominant_eig, mat_exp, solve_linear

ROOT_TOL = 1e-10
SCAN_STEP = 1e-2


@dataclass(frozen=True)
class DelayDescriptor:
    a0: np.ndarray
    a1: np.ndarray
    r: float
    kernel: np.ndarray | None = None  # (q, n, n) samples of K on a uniform grid over [-r, 0]

    def __post_init__(self):
        a0 = as_matrix(self.a0, "a0")
        a1 = as_matrix(self.a1, "a1")
        if a0.shape[0] != a0.shape[1] or a1.shape != a0.shape:
            raise PreconditionError(f"a0 and a1 must be equal square shapes, got {a0.shape}, {a1.shape}")
        if not self.r > 0:
            raise PreconditionError(f"delay must be positive, got {self.r}")
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "a1", a1)
        if self.kernel is not None:
            k = np.asarray(self.kernel, dtype=float)
            n = a0.shape[0]
            if k.ndim == 1:
                k = k.reshape(-1, 1, 1)
            if k.ndim != 3 or k.shape[1:] != (n, n) or k.shape[0] < 2:
                raise PreconditionError(f"kernel must be (q >= 2, {n}, {n}), got {k.shape}")
            if not np.all(np.isfinite(k)):
                raise PreconditionError("kernel has non-finite entries")
            object.__setattr__(self, "kernel", k)

    @property
    def n(self):
        return self.a0.shape[0]

    @property
    def kernel_thetas(self):
        return np.linspace(-self.r, 0.0, self.kernel.shape[0])

    def kernel_at(self, thetas):
        """Kernel linearly interpolated to ``thetas``; shape ``(len(thetas), n, n)``."""
        q = self.kernel.reshape(self.kernel.shape[0], -1)
        cols = [np.interp(thetas, self.kernel_thetas, q[:, i]) for i in range(q.shape[1])]
        return np.stack(cols, axis=1).reshape(len(thetas), self.n, self.n)

    def similar(self, t):
        """Descriptor for the state change ``w = t v``."""
        t = as_matrix(t)
        ti = np.linalg.inv(t)
        kernel = None if self.kernel is None else np.einsum("ij,qjk,kl->qil", ti, self.kernel, t)
        return DelayDescriptor(ti @ self.a0 @ t, ti @ self.a1 @ t, self.r, kernel)


def _trapezoid_weights(count, h):
    w = np.full(count, h)
    w[0] = w[-1] = h / 2
    return w


@dataclass(frozen=True)
class LiftedSystem:
    descriptor: DelayDescriptor
    big_n: int
    big_a: np.ndarray

    @property
    def n(self):
        return self.descriptor.n

    @property
    def dt_theta(self):
        return self.descriptor.r / self.big_n

    @property
    def thetas(self):
        return np.linspace(-self.descriptor.r, 0.0, self.big_n + 1)

    def history_coupling(self):
        """The delay operator ``L`` as an ``n x n (big_n + 1)`` matrix on history nodes."""
        d, n = self.descriptor, self.n
        coupling = np.zeros((n, n * (self.big_n + 1)))
        coupling[:, :n] += d.a1
        if d.kernel is not None:
            weights = _trapezoid_weights(self.big_n + 1, self.dt_theta)
            ks = d.kernel_at(self.thetas)
            for j in range(self.big_n + 1):
                coupling[:, j * n:(j + 1) * n] += weights[j] * ks[j]
        return coupling


def build_lift(d: DelayDescriptor, big_n: int) -> LiftedSystem:
    """Assemble the discretized generator of the lifted (history, head) system."""
    if big_n < 2:
        raise PreconditionError(f"need at least 2 history intervals, got {big_n}")
    n, h = d.n, d.r / big_n
    size = n * (big_n + 1)
    big_a = np.zeros((size, size))
    eye = np.eye(n) / h
    for j in range(big_n):
        rows = slice(j * n, (j + 1) * n)
        big_a[rows, j * n:(j + 1) * n] = -eye
        big_a[rows, (j + 1) * n:(j + 2) * n] = eye
    lifted = LiftedSystem(d, big_n, big_a)
    head = slice(big_n * n, size)
    big_a[head, :] = lifted.history_coupling()
    big_a[head, head] += d.a0
    return lifted


@dataclass(frozen=True)
class CharFunction:
    """``lam -> det(lam I - a0 - a1 exp(-lam r) - int K(theta) exp(lam theta) dtheta)``."""

    descriptor: DelayDescriptor

    def matrix(self, lam):
        d = self.descriptor
        m = lam * np.eye(d.n) - d.a0 - d.a1 * np.exp(-lam * d.r)
        if d.kernel is not None:
            thetas = d.kernel_thetas
            weights = _trapezoid_weights(len(thetas), thetas[1] - thetas[0])
            m = m - np.einsum("q,qij->ij", weights * np.exp(lam * thetas), d.kernel)
        return m

    def __call__(self, lam):
        return char_eval(self, lam)


def char_eval(cf: CharFunction, lam):
    value = np.linalg.det(cf.matrix(lam))
    return value if isinstance(lam, complex) or np.iscomplexobj(value) else float(value)


def rightmost_real_root(cf: CharFunction, bracket=(-5.0, 5.0)):
    """Largest real zero of ``cf`` in ``bracket``, or None.

    The bracket is scanned at spacing 0.01 for sign changes and the rightmost
    one is refined by bisection to 1e-10.
    """
    lo, hi = bracket
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise PreconditionError(f"bracket must be finite and increasing, got {bracket}")
    d = cf.descriptor
    if d.kernel is None and not np.any(d.a1):
        # no delay: the zeros are the real eigenvalues of a0
        eig = np.linalg.eigvals(d.a0)
        real = eig.real[(np.abs(eig.imag) <= 1e-12) & (eig.real >= lo) & (eig.real <= hi)]
        return float(real.max()) if real.size else None
    grid = np.linspace(lo, hi, int(np.ceil((hi - lo) / SCAN_STEP)) + 1)
    values = np.array([char_eval(cf, float(x)) for x in grid])
    for i in range(len(grid) - 1, 0, -1):
        if values[i] == 0.0:
            return float(grid[i])
        if np.sign(values[i]) != np.sign(values[i - 1]):
            return _bisect(lambda x: char_eval(cf, x), grid[i - 1], grid[i], values[i - 1])
    if values[0] == 0.0:
        return float(grid[0])
    return None


def _bisect(f, a, b, fa, tol=ROOT_TOL):
    sa = np.sign(fa)
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == sa:
            a = mid
        else:
            b = mid
    return float(0.5 * (a + b))


def lifted_growth(ls: LiftedSystem, dt=1.0, tol=1e-12, max_iter=20_000):
    """Growth rate ``log(rho(exp(big_a dt))) / dt`` by power iteration."""
    value, _ = dominant_eig(mat_exp(ls.big_a, dt), tol=tol, max_iter=max_iter)
    if value <= 0:
        raise SpectrumError(f"dominant propagator eigenvalue {value} is not positive")
    return float(np.log(value) / dt)


def _e_lambda(ls, lam, kind):
    """Samples of ``theta -> exp(lam theta)`` on the history nodes (``(big_n + 1)`` values).

    ``kind="discrete"`` uses the exact kernel of the upwind operator,
    ``(1 + lam h)^{-(big_n - j)}``, instead.
    """
    if kind == "continuous":
        return np.exp(lam * ls.thetas)
    if kind == "discrete":
        return (1.0 + lam * ls.dt_theta) ** -np.arange(ls.big_n, -1, -1, dtype=float)
    raise ValueError(f"unknown e_lambda kind {kind!r}")


def resolvent_blocks_apply(ls: LiftedSystem, lam, rhs, e_lambda="continuous"):
    """Apply the block resolvent built from the undelayed pieces to ``rhs``.

    With ``R_h`` the resolvent of the zero-inflow transport operator,
    ``R_0 = (lam - a0)^-1``, ``e`` the exponential profile and ``L`` the delay
    coupling, the blocks are (boundary input terms absent)::

        N1 = (I - R_0 L e)^-1
        W1 = N1 R_0 L R_h          W2 = N1 R_0
        W5 = R_0 L R_h + R_0 L e W1
        W6 = R_0 + R_0 L e W2
        R  = [[R_h + e W1, e W2], [W5, W6]]

    ``rhs`` is laid out like the lifted state: ``big_n`` history blocks then ``w``.
    """
    n, big_n = ls.n, ls.big_n
    rhs = np.asarray(rhs, dtype=float)
    rhs_h, rhs_w = rhs[: n * big_n], rhs[n * big_n:]
    h = ls.dt_theta
    transport = np.zeros((n * big_n, n * big_n))
    for j in range(big_n):
        transport[j * n:(j + 1) * n, j * n:(j + 1) * n] = -np.eye(n) / h
        if j + 1 < big_n:
            transport[j * n:(j + 1) * n, (j + 1) * n:(j + 2) * n] = np.eye(n) / h
    coupling = ls.history_coupling()
    profile = _e_lambda(ls, lam, e_lambda)
    e_mat = np.kron(profile[:, None], np.eye(n))  # n(big_n+1) x n
    try:
        z = solve_linear(lam * np.eye(n * big_n) - transport, rhs_h)
        r0 = lambda v: solve_linear(lam * np.eye(n) - ls.descriptor.a0, v)  # noqa: E731
        r0_le = r0(coupling @ e_mat)
        n1 = solve_linear(np.eye(n) - r0_le, np.eye(n))
    except SingularMatrixError as exc:
        raise SpectrumError(f"lambda = {lam} is not in the resolvent set") from exc
    z_ext = np.concatenate([z, np.zeros(n)])
    w1 = n1 @ r0(coupling @ z_ext)
    w2 = n1 @ r0(rhs_w)
    top = z_ext + e_mat @ (w1 + w2)
    w5 = r0(coupling @ z_ext) + r0_le @ w1
    w6 = r0(rhs_w) + r0_le @ w2
    return np.concatenate([top[: n * big_n], w5 + w6])


def verify_resolvent_structure(ls: LiftedSystem, lam, rhs, e_lambda="continuous"):
    """Relative residual ``||(lam - big_a) R rhs - rhs|| / ||rhs||`` of the block resolvent."""
    y = resolvent_blocks_apply(ls, lam, rhs, e_lambda)
    rhs = np.asarray(rhs, dtype=float)
    residual = lam * y - ls.big_a @ y - rhs
    return float(np.linalg.norm(residual) / np.linalg.norm(rhs))


def smooth_rhs(ls: LiftedSystem, seed=0, modes=3):
    """A seeded right-hand side whose history part samples a fixed smooth function.

    The same seed gives the same underlying function for every ``big_n``, so
    residuals can be compared across refinements.
    """
    rng = np.random.default_rng(seed)
    n, r = ls.n, ls.descriptor.r
    coef = rng.uniform(-1, 1, (modes, n))
    head = rng.uniform(-1, 1, n)
    thetas = ls.thetas[:-1]
    k = np.arange(modes)[:, None]
    basis = np.cos(np.pi * k * thetas[None, :] / r)  # modes x big_n
    hist = basis.T @ coef  # big_n x n
    return np.concatenate([hist.reshape(-1), head])
