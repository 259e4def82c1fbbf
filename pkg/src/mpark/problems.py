"""Test systems: van der Pol, viscous Burgers, Dahlquist and heat-equation operators.

Right-hand sides and Jacobians use elementwise arithmetic only, so they
evaluate in whatever precision their input array is stored in.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .precision import constant, level_of, to_level, zeros

Vector = Callable[[object], object]


@dataclass(frozen=True)
class OdeProblem:
    label: str
    dim: int
    rhs: Vector
    jac: Vector
    y0: np.ndarray
    t_final: float = 1.0
    exact: Callable[[float], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def initial(self, level):
        """Initial state rounded into ``level``."""
        return to_level(self.y0, level)

    def describe(self) -> str:
        extra = " ".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.label} {extra}".strip()


def van_der_pol(alpha: float = 1.0) -> OdeProblem:
    if not alpha > 0:
        raise ValueError("alpha must be positive")

    def rhs(y):
        a = constant(alpha, y)
        out = zeros(2, y)
        y1, y2 = y[0], y[1]
        out[0] = y2
        out[1] = a * y2 * (1 - y1 * y1) - y1
        return out

    def jac(y):
        a = constant(alpha, y)
        J = zeros((2, 2), y)
        y1, y2 = y[0], y[1]
        J[0, 1] = constant(1, y)
        J[1, 0] = -(2 * a) * y1 * y2 - 1
        J[1, 1] = a * (1 - y1 * y1)
        return J

    return OdeProblem("vdp", 2, rhs, jac, np.array([2.0, 0.0]), 1.0, params={"alpha": alpha})


@dataclass(frozen=True)
class BurgersDiscretization:
    nx: int
    nu: Fraction = Fraction(1, 100)

    @property
    def dx(self) -> float:
        return 1.0 / (self.nx + 1)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(1, self.nx + 1) / (self.nx + 1)


def viscous_burgers(nx: int = 200) -> OdeProblem:
    """``u_t + (u^2/2)_x = u_xx / 100`` on ``nx`` interior points, zero Dirichlet data."""
    if nx < 3:
        raise ValueError("burgers needs nx >= 3")
    disc = BurgersDiscretization(nx)
    inv_dx = nx + 1
    diff = disc.nu * (nx + 1) ** 2  # nu / dx^2, exact
    rows = np.arange(nx)

    def rhs(u):
        k = constant(diff, u)
        inv = constant(inv_dx, u)
        pad = zeros(nx + 2, u)
        pad[1:-1] = u
        flux = pad * pad / 2
        up, mid, dn = pad[2:], pad[1:-1], pad[:-2]
        return -(flux[2:] - flux[1:-1]) * inv + k * (up - 2 * mid + dn)

    def jac(u):
        k = constant(diff, u)
        inv = constant(inv_dx, u)
        J = zeros((nx, nx), u)
        J[rows, rows] = u * inv - 2 * k
        J[rows[:-1], rows[1:]] = k - u[1:] * inv
        J[rows[1:], rows[:-1]] = k + zeros(nx - 1, u)
        return J

    y0 = np.sin(2 * np.pi * disc.grid)
    return OdeProblem("burgers", nx, rhs, jac, y0, 1.0, params={"nx": nx})


def dahlquist(lam: complex | float = -1.0) -> OdeProblem:
    is_complex = isinstance(lam, complex) and lam.imag != 0
    if not is_complex:
        lam = float(getattr(lam, "real", lam))

    def rhs(y):
        return _scalar(lam, y) * y

    def jac(y):
        J = zeros((1, 1), y) if not is_complex else np.zeros((1, 1), dtype=np.asarray(y).dtype)
        J[0, 0] = _scalar(lam, y)
        return J

    def exact(t: float) -> np.ndarray:
        v = cmath.exp(lam * t)
        return np.array([v if is_complex else v.real])

    y0 = np.array([1.0 + 0j]) if is_complex else np.array([1.0])
    return OdeProblem("dahlquist", 1, rhs, jac, y0, 1.0, exact=exact, params={"lambda": lam})


def _scalar(value, like):
    if isinstance(value, complex):
        return np.asarray(value, dtype=np.asarray(like).dtype)[()]
    return constant(value, like)


# ---------------------------------------------------------------------------
# periodic heat equation operators

@dataclass(frozen=True)
class HeatOperators:
    nx: int
    D_c: np.ndarray
    D_s: np.ndarray

    @property
    def dx(self) -> float:
        return 2 * np.pi / self.nx

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers in FFT order; Nyquist reported as +nx/2."""
        k = np.fft.fftfreq(self.nx, d=1.0 / self.nx)
        k[self.nx // 2] = self.nx // 2
        return k

    @property
    def eig_c(self) -> np.ndarray:
        """Eigenvalues of ``D_c`` in the order of :attr:`wavenumbers`."""
        return -(2 - 2 * np.cos(self.wavenumbers * self.dx)) / self.dx**2

    @property
    def eig_s(self) -> np.ndarray:
        return -self.wavenumbers.astype(float) ** 2


def heat_operators(nx: int = 64) -> HeatOperators:
    if nx < 4 or nx % 2:
        raise ValueError("heat operators need an even nx >= 4")
    dx = 2 * np.pi / nx
    col = np.zeros(nx)
    col[0], col[1], col[-1] = -2.0, 1.0, 1.0
    D_c = _circulant(col) / dx**2
    # spectral: diagonalise by the DFT with symbol -k^2 (Nyquist -(nx/2)^2)
    k = np.fft.fftfreq(nx, d=1.0 / nx)
    k[nx // 2] = nx // 2
    col_s = np.fft.ifft(-(k**2)).real
    D_s = _circulant(col_s)
    return HeatOperators(nx, D_c, D_s)


def _circulant(col: np.ndarray) -> np.ndarray:
    n = len(col)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return col[idx]


def heat_problem(nx: int = 64, operator: str = "spectral") -> OdeProblem:
    """Linear system ``u' = D u`` with ``D`` one of the heat operators; ``u0 = sin(x)``."""
    ops = heat_operators(nx)
    D = {"spectral": ops.D_s, "centered": ops.D_c}[operator]

    def rhs(u):
        Dl = to_level(D, level_of(u))
        out = Dl[:, 0] * u[0]
        for j in range(1, nx):
            out = out + Dl[:, j] * u[j]
        return out

    def jac(u):
        return to_level(D, level_of(u))

    def exact(t: float) -> np.ndarray:
        lam = ops.eig_s[1] if operator == "spectral" else ops.eig_c[1]
        return np.exp(lam * t) * np.sin(ops.grid)

    return OdeProblem("heat", nx, rhs, jac, np.sin(ops.grid), 1.0, exact=exact,
                      params={"nx": nx, "operator": operator})


def build_problem(name: str, *, alpha: float = 1.0, nx: int | None = None,
                  lam: complex | float = -1.0) -> OdeProblem:
    key = name.strip().lower()
    if key == "vdp":
        return van_der_pol(alpha)
    if key == "burgers":
        return viscous_burgers(200 if nx is None else nx)
    if key == "dahlquist":
        return dahlquist(lam)
    if key == "heat":
        return heat_problem(64 if nx is None else nx)
    raise ValueError(f"unknown problem {name!r}; expected vdp|burgers|dahlquist|heat")
