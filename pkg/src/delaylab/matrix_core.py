"""Dense linear-algebra kernel.

Matrices are plain 2-D numpy arrays. Everything here is a pure function; the
only state is a fixed start vector for the power iteration so that results
are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionError,
    NumericRangeError,
    PreconditionError,
    SingularMatrixError,
)

PIVOT_THRESHOLD = 1e-12
_PADE_ORDER = 8
_SCALED_NORM = 0.5
_RANGE_LIMIT = 1e300


def as_matrix(x, name="matrix"):
    """Coerce ``x`` to a finite 2-D float (or complex) array."""
    m = np.asarray(x)
    if m.dtype.kind not in "fc":
        m = m.astype(float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    elif m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericRangeError(f"{name} has non-finite entries")
    return m


def _require_square(a, name="matrix"):
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")


@dataclass(frozen=True)
class BlockMatrix2x2:
    """The 2x2 operator matrix [[a, b], [c, d]] with a n x n and d m x m."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))
        n, m = self.a.shape[0], self.d.shape[0]
        _require_square(self.a, "a")
        _require_square(self.d, "d")
        if self.b.shape != (n, m) or self.c.shape != (m, n):
            raise DimensionError(
                f"blocks not conformable: a {self.a.shape}, b {self.b.shape}, "
                f"c {self.c.shape}, d {self.d.shape}"
            )

    def assemble(self):
        return np.block([[self.a, self.b], [self.c, self.d]])


def _pade_coefficients(q):
    return [
        factorial(2 * q - k) * factorial(q) / (factorial(2 * q) * factorial(k) * factorial(q - k))
        for k in range(q + 1)
    ]


_PADE = _pade_coefficients(_PADE_ORDER)


def mat_exp(a, t=1.0):
    """Return ``exp(a * t)`` by scaling and squaring around a [8/8] Pade kernel.

    The scaling exponent is the smallest ``s`` with ``||a t / 2**s||_1 <= 0.5``.
    """
    a = as_matrix(a, "a")
    _require_square(a, "a")
    if not np.isfinite(t):
        raise PreconditionError("t must be finite")
    x = a * t
    n = x.shape[0]
    norm = np.abs(x).sum(axis=0).max() if n else 0.0
    s = 0
    if norm > _SCALED_NORM:
        s = int(np.ceil(np.log2(norm / _SCALED_NORM)))
        if s > 1100:
            raise NumericRangeError(f"||a t|| = {norm:g} is out of range")
        x = x / 2.0**s
    ident = np.eye(n, dtype=x.dtype)
    even = _PADE[0] * ident
    odd = np.zeros_like(ident)
    power = ident
    for k in range(1, _PADE_ORDER + 1):
        power = power @ x
        if k % 2:
            odd = odd + _PADE[k] * power
        else:
            even = even + _PADE[k] * power
    result = np.linalg.solve(even - odd, even + odd)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(s):
            result = result @ result
    if not np.all(np.isfinite(result)) or (result.size and np.abs(result).max() > _RANGE_LIMIT):
        raise NumericRangeError("matrix exponential overflowed")
    return result


def _lu_factor(a):
    """LU with partial pivoting; returns (lu, perm) or raises SingularMatrixError."""
    lu = np.array(a, dtype=np.result_type(a, float), copy=True)
    n = lu.shape[0]
    perm = np.arange(n)
    scale = np.abs(lu).max() if n else 0.0
    if n and scale == 0.0:
        raise SingularMatrixError("matrix is zero", pivot_ratio=0.0)
    smallest = np.inf
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        pivot = abs(lu[p, k])
        if pivot < PIVOT_THRESHOLD * scale:
            raise SingularMatrixError(
                f"pivot {pivot:.3e} at column {k} below {PIVOT_THRESHOLD:g} x {scale:.3e}",
                pivot_ratio=pivot / scale,
                cond=_cond_estimate(a),
            )
        smallest = min(smallest, pivot)
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm


def _cond_estimate(a):
    with np.errstate(all="ignore"):
        try:
            return float(np.linalg.cond(a, 1))
        except np.linalg.LinAlgError:
            return float("inf")


def _lu_solve(lu, perm, b):
    x = b[perm].astype(np.result_type(lu, b), copy=True)
    n = lu.shape[0]
    for k in range(n):
        x[k + 1:] -= np.outer(lu[k + 1:, k], x[k])
    for k in range(n - 1, -1, -1):
        x[k] -= lu[k, k + 1:] @ x[k + 1:]
        x[k] /= lu[k, k]
    return x


def solve_linear(a, b):
    """Solve ``a x = b`` by Gaussian elimination with partial pivoting.

    Rejects the system (``SingularMatrixError``) as soon as a pivot falls
    below ``1e-12`` times the largest entry of ``a``. ``b`` may be a vector or
    a matrix of right-hand sides; the result has the same shape as ``b``.
    """
    a = as_matrix(a, "a")
    _require_square(a, "a")
    b_arr = np.asarray(b)
    vector = b_arr.ndim == 1
    b2 = as_matrix(b_arr, "b")
    if b2.shape[0] != a.shape[0]:
        raise DimensionError(f"b has {b2.shape[0]} rows, expected {a.shape[0]}")
    lu, perm = _lu_factor(a)
    x = _lu_solve(lu, perm, b2)
    return x[:, 0] if vector else x


def inverse(a):
    a = as_matrix(a, "a")
    _require_square(a, "a")
    return solve_linear(a, np.eye(a.shape[0]))


def block_inverse(m: BlockMatrix2x2) -> BlockMatrix2x2:
    """Invert a 2x2 block operator using Schur complements of both diagonal blocks.

    Requires ``a``, ``d`` and ``a - b d^-1 c`` invertible. Then
    ``(d - c a^-1 b)^-1 = d^-1 + d^-1 c (a - b d^-1 c)^-1 b d^-1`` and the four
    blocks of the inverse are::

        [[ S_a^-1,            -a^-1 b S_d^-1 ],
         [ -d^-1 c S_a^-1,     S_d^-1        ]]

    with ``S_a = a - b d^-1 c`` and ``S_d = d - c a^-1 b``.
    """

    def _inv(x, label):
        try:
            return inverse(x)
        except SingularMatrixError as exc:
            raise PreconditionError(f"block inverse hypothesis fails: {label} is singular") from exc

    a_inv = _inv(m.a, "a")
    d_inv = _inv(m.d, "d")
    schur_a = m.a - m.b @ d_inv @ m.c
    schur_a_inv = _inv(schur_a, "a - b d^-1 c")
    schur_d_inv = d_inv + d_inv @ m.c @ schur_a_inv @ m.b @ d_inv
    return BlockMatrix2x2(
        a=schur_a_inv,
        b=-a_inv @ m.b @ schur_d_inv,
        c=-d_inv @ m.c @ schur_a_inv,
        d=schur_d_inv,
    )


def _start_vector(n):
    return np.random.default_rng(20240611).standard_normal(n)


def dominant_eig(p, tol=1e-10, max_iter=10_000):
    """Power iteration for a real, simple, strictly dominant eigenvalue.

    Returns ``(value, vector)`` with unit ``vector`` and
    ``||p v - value v|| <= tol``. A complex dominant pair never settles the
    Rayleigh quotient; that case ends in ``ConvergenceError`` whose
    ``history`` holds the trailing Rayleigh quotients.
    """
    p = as_matrix(p, "p")
    _require_square(p, "p")
    n = p.shape[0]
    v = _start_vector(n)
    v /= np.linalg.norm(v)
    history = []
    for _ in range(max_iter):
        w = p @ v
        value = float(v @ w)
        if np.linalg.norm(w - value * v) <= tol:
            return value, v
        norm = np.linalg.norm(w)
        if not np.isfinite(norm):
            raise NumericRangeError("power iteration overflowed")
        v = w / norm
        history.append(value)
    tail = np.asarray(history[-64:])
    turns = int(np.sum(np.diff(np.sign(np.diff(tail))) != 0)) if tail.size > 2 else 0
    raise ConvergenceError(
        f"no convergence in {max_iter} iterations; Rayleigh quotient changed direction "
        f"{turns} times over the last {tail.size} steps (complex dominant pair?)",
        history=tail,
    )


def zoh_discretize(a, b, dt):
    """Exact one-step map of ``x' = a x + b u`` for ``u`` held constant over ``dt``.

    Returns ``(exp(a dt), int_0^dt exp(a s) ds b)`` read off the exponential of
    the augmented matrix ``[[a, b], [0, 0]]``.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _require_square(a, "a")
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"b has {b.shape[0]} rows, expected {a.shape[0]}")
    if not dt > 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    n, m = b.shape
    aug = np.zeros((n + m, n + m), dtype=np.result_type(a, b))
    aug[:n, :n] = a
    aug[:n, n:] = b
    e = mat_exp(aug, dt)
    return e[:n, :n], e[:n, n:]
