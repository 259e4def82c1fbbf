"""Newton iteration for implicit stage equations at a fixed precision level."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .ddouble import DDArray
from .precision import (DOUBLE, PrecisionLevel, RangeFault, eval_low, eye, is_finite, max_abs,
                        to_level)


class NotConverged(RuntimeError):
    def __init__(self, y, residual_norm: float, iterations: int):
        super().__init__(f"Newton did not converge in {iterations} iterations "
                         f"(residual {residual_norm:.3e})")
        self.y = y
        self.residual_norm = residual_norm
        self.iterations = iterations


class SingularJacobian(ArithmeticError):
    pass


@dataclass(frozen=True)
class NewtonConfig:
    level: PrecisionLevel = DOUBLE
    max_iters: int = 20
    tol_factor: float = 10.0
    # updates applied before the convergence test may accept an iterate
    min_iters: int = 1

    def __post_init__(self):
        if not 0 <= self.min_iters <= self.max_iters:
            raise ValueError("need 0 <= min_iters <= max_iters")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol_factor > 0:
            raise ValueError("tol_factor must be positive")

    def tolerance(self, y) -> float:
        return self.tol_factor * self.level.unit_roundoff * (1.0 + max_abs(y))


@dataclass
class NewtonResult:
    y: object
    iterations: int
    residual_norm: float
    converged: bool
    # "residual" when ||G|| met the tolerance, "increment" when the update
    # stalled below it (residual floor from rounding at the working level)
    criterion: str = "residual"


def _magnitude(x) -> np.ndarray:
    if isinstance(x, DDArray):
        return np.abs(x.hi)
    return np.abs(np.asarray(x)).astype(np.float64)


def _nonzero(x) -> np.ndarray:
    if isinstance(x, DDArray):
        return np.flatnonzero(x.hi)
    return np.flatnonzero(np.asarray(x))


def linear_solve(A, b, level: PrecisionLevel):
    """Solve ``A x = b`` by LU with partial pivoting, every operation rounded to ``level``.

    Zero multipliers and zero entries of the pivot row are skipped; since
    ``a - 0*m == a`` exactly this is bit-identical to dense elimination
    while keeping banded systems cheap.
    """
    A = to_level(A, level)
    b = to_level(b, level)
    A = A.copy()
    x = b.copy()
    n = A.shape[0]
    if A.shape != (n, n) or x.shape != (n,):
        raise ValueError(f"incompatible shapes {A.shape} and {x.shape}")
    tiny = 2.0 ** level.exponent_range[0]
    for k in range(n):
        mags = _magnitude(A[k:, k])
        p = k + int(np.argmax(mags))
        piv_mag = mags[p - k]
        if not np.isfinite(piv_mag) or piv_mag < tiny:
            raise SingularJacobian(f"pivot {piv_mag:.3e} at column {k} is singular at {level}")
        if p != k:
            A[[k, p]] = A[[p, k]]
            x[[k, p]] = x[[p, k]]
        rows = k + 1 + _nonzero(A[k + 1:, k])
        if rows.size == 0:
            continue
        m = A[rows, k] / A[k, k]
        cols = k + 1 + _nonzero(A[k, k + 1:])
        if cols.size:
            A[rows[:, None], cols[None, :]] = A[rows[:, None], cols[None, :]] - m[:, None] * A[k, cols][None, :]
        x[rows] = x[rows] - m * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = x[k] / A[k, k]
        rows = _nonzero(A[:k, k])
        if rows.size:
            x[rows] = x[rows] - A[rows, k] * x[k]
    if not is_finite(x):
        raise SingularJacobian(f"linear solve produced non-finite values at {level}")
    return x


def newton(G, JG, y0, cfg: NewtonConfig) -> NewtonResult:
    """Plain Newton iteration on ``G(y) = 0`` with Jacobian ``JG``, all at ``cfg.level``.

    Converges when ``||G(y)|| <= tol`` or when an update is itself below ``tol``.
    """
    y = to_level(y0, cfg.level)
    if not isinstance(y, DDArray):
        y = np.atleast_1d(y)
    for it in range(cfg.max_iters + 1):
        r = G(y)
        rnorm = max_abs(r)
        if not np.isfinite(rnorm):
            raise RangeFault(f"Newton residual overflowed at {cfg.level}")
        if it >= cfg.min_iters and rnorm <= cfg.tolerance(y):
            return NewtonResult(y, it, rnorm, True, "residual")
        if it == cfg.max_iters:
            raise NotConverged(y, rnorm, it)
        delta = linear_solve(JG(y), r, cfg.level)
        y = to_level(y - delta, cfg.level)
        if it + 1 >= cfg.min_iters and max_abs(delta) <= cfg.tolerance(y):
            return NewtonResult(y, it + 1, max_abs(G(y)), True, "increment")
    raise AssertionError("unreachable")


def stage_step(coeff, dt) -> Fraction:
    """Exact product ``coeff * dt`` (both finite floats or Fractions)."""
    return Fraction(coeff) * Fraction(dt)


def solve_stage(base, coeff, dt, rhs, jac, cfg: NewtonConfig) -> NewtonResult:
    """Solve ``y = base + coeff*dt*F(y)`` at ``cfg.level``, starting from ``round(base)``."""
    level = cfg.level
    h = to_level(stage_step(coeff, dt), level)
    if not is_finite(h):
        raise RangeFault(f"coeff*dt overflows {level}")
    base_l = to_level(base, level)

    def G(y):
        return y - base_l - h * eval_low(rhs, y, level)

    def JG(y):
        J = to_level(jac(y), level)
        return eye(J.shape[0], J) - h * J

    return newton(G, JG, base_l, cfg)
