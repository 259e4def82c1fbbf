"""Linear stability and roundoff sensitivity of MP-ARK methods."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .problems import HeatOperators
from .tableaus import MpTableau

STABLE_TOL = 1e-12


class SingularResolvent(ArithmeticError):
    pass


def _resolvent_solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        x = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularResolvent(str(exc)) from None
    if not np.all(np.isfinite(x)):
        raise SingularResolvent("resolvent solve produced non-finite values")
    return x


def psi_eps(t: MpTableau, z: complex, eps_tilde: float = 0.0, tau=None) -> complex:
    """Amplification factor ``1 + z b (I - z A~ - z eps~ diag(tau))^-1 e``."""
    s = t.s
    tau = np.zeros(s) if tau is None else np.broadcast_to(np.asarray(tau, dtype=float), (s,))
    M = np.eye(s) - z * t.A_tilde - z * eps_tilde * np.diag(tau)
    if np.linalg.cond(M) > 1e14:
        raise SingularResolvent(f"I - zA is singular at z={z}")
    x = _resolvent_solve(M.astype(complex), np.ones(s, dtype=complex))
    return complex(1 + z * (t.b_tilde @ x))


def stability_polynomial(t: MpTableau, z) -> np.ndarray:
    """Exact-precision stability function evaluated on an array of ``z``."""
    return t.stability_function(z)


@dataclass
class StabilityGrid:
    method: str
    re_range: tuple[float, float]
    im_range: tuple[float, float]
    resolution: tuple[int, int]  # (nx, ny)
    eps_tilde: float
    samples: int
    seed: int
    cells: np.ndarray = field(repr=False)  # bool, shape (ny, nx); row j is im[j]

    @property
    def re(self) -> np.ndarray:
        return np.linspace(*self.re_range, self.resolution[0])

    @property
    def im(self) -> np.ndarray:
        return np.linspace(*self.im_range, self.resolution[1])

    def stable_fraction(self, left_half_only: bool = False) -> float:
        cells = self.cells[:, self.re <= 0] if left_half_only else self.cells
        return float(cells.mean()) if cells.size else 0.0


def _grid_row(t: MpTableau, re: np.ndarray, im_j: float, j: int, eps_tilde: float,
              samples: int, seed: int) -> np.ndarray:
    s = t.s
    nx = len(re)
    z = re + 1j * im_j
    # per-cell generator keyed on (seed, j, i): identical at any thread count,
    # and prefix-stable as the sample count grows
    tau = np.stack([np.random.default_rng([seed, j, i]).random((samples, s)) - 0.5 for i in range(nx)])
    M = (np.eye(s)[None, None] - z[:, None, None, None] * t.A_tilde[None, None]
         - (z[:, None, None] * eps_tilde * tau)[..., None] * np.eye(s)[None, None])
    e = np.ones((nx, samples, s, 1), dtype=complex)
    try:
        x = np.linalg.solve(M, e)[..., 0]
        singular = ~np.all(np.isfinite(x), axis=-1)
    except np.linalg.LinAlgError:
        x = np.zeros((nx, samples, s), dtype=complex)
        singular = np.zeros((nx, samples), dtype=bool)
        for i in range(nx):
            for k in range(samples):
                try:
                    x[i, k] = np.linalg.solve(M[i, k], e[i, k, :, 0])
                except np.linalg.LinAlgError:
                    singular[i, k] = True
    psi = 1 + z[:, None] * (x @ t.b_tilde)
    ok = (np.abs(psi) <= 1 + STABLE_TOL) & ~singular
    return ok.all(axis=1)


def stability_region(t: MpTableau, eps_tilde: float = 0.0, *,
                     re_range=(-40.0, 5.0), im_range=(-20.0, 20.0), resolution=(400, 400),
                     samples: int = 16, seed: int = 0, threads: int | None = None) -> StabilityGrid:
    """Classify grid cells stable when ``|Psi_eps| <= 1`` for every sampled ``tau``."""
    nx, ny = resolution
    if nx < 2 or ny < 2 or samples < 1:
        raise ValueError("need resolution >= 2x2 and samples >= 1")
    re = np.linspace(*re_range, nx)
    im = np.linspace(*im_range, ny)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(lambda j: _grid_row(t, re, im[j], j, eps_tilde, samples, seed), range(ny)))
    return StabilityGrid(t.label, tuple(re_range), tuple(im_range), (nx, ny), eps_tilde, samples,
                         seed, np.array(rows))


# ---------------------------------------------------------------------------
# mixed-model heat equation

@dataclass(frozen=True)
class MixedModelSpec:
    ops: HeatOperators
    corrections: int = 0
    cfl: float = 0.5
    implicit: str = "centered"   # operator in the low-precision implicit stage
    explicit: str = "spectral"   # operator in the corrections and final update
    form: str = "product"        # "product" or "stagewise" (exact corrected-IMR recurrence)

    def __post_init__(self):
        if not self.cfl > 0:
            raise ValueError("cfl must be positive")
        if self.corrections < 0:
            raise ValueError("corrections must be >= 0")
        for op in (self.implicit, self.explicit):
            if op not in ("centered", "spectral"):
                raise ValueError(f"unknown operator {op!r}")
        if self.form not in ("product", "stagewise"):
            raise ValueError(f"unknown form {self.form!r}")

    @property
    def dt(self) -> float:
        return self.cfl * self.ops.dx**2


def _symbol(ops: HeatOperators, which: str) -> np.ndarray:
    return ops.eig_c if which == "centered" else ops.eig_s


def _matrix(ops: HeatOperators, which: str) -> np.ndarray:
    return ops.D_c if which == "centered" else ops.D_s


def mixed_model_symbols(spec: MixedModelSpec) -> np.ndarray:
    """Per-Fourier-mode amplification factors of the mixed-model scheme."""
    dt, c = spec.dt, spec.corrections
    lam_e = _symbol(spec.ops, spec.explicit)
    lam_i = _symbol(spec.ops, spec.implicit)
    implicit = 1.0 / (1 - 0.5 * dt * lam_i)
    half = 0.5 * dt * lam_e
    if spec.form == "product":
        return 1 + dt * lam_e * (1 + half) ** c * implicit
    # y_0 = (1 - dt/2 D_i)^-1 u, y_k = u + dt/2 D_e y_{k-1}, u+ = u + dt D_e y_c
    y = implicit
    for _ in range(c):
        y = 1 + half * y
    return 1 + dt * lam_e * y


def mixed_model_radius(spec: MixedModelSpec) -> float:
    """Spectral radius of the one-step matrix, computed mode by mode."""
    return float(np.max(np.abs(mixed_model_symbols(spec))))


def mixed_model_matrix(spec: MixedModelSpec) -> np.ndarray:
    n = spec.ops.nx
    dt, c = spec.dt, spec.corrections
    E = _matrix(spec.ops, spec.explicit)
    Im = _matrix(spec.ops, spec.implicit)
    I = np.eye(n)
    inv = np.linalg.solve(I - 0.5 * dt * Im, I)
    if spec.form == "product":
        return I + dt * E @ np.linalg.matrix_power(I + 0.5 * dt * E, c) @ inv
    Y = inv
    for _ in range(c):
        Y = I + 0.5 * dt * E @ Y
    return I + dt * E @ Y


def mixed_model_radius_dense(spec: MixedModelSpec) -> float:
    """Brute-force spectral radius from a dense eigensolve (cross-check path)."""
    return float(np.max(np.abs(np.linalg.eigvals(mixed_model_matrix(spec)))))


# ---------------------------------------------------------------------------
# roundoff sensitivity

def _psi_row(t: MpTableau, z: float) -> np.ndarray:
    """Row vector ``z b (I - z A~)^-1``."""
    M = np.eye(t.s) - z * t.A_tilde
    if np.linalg.cond(M) > 1e14:
        raise SingularResolvent(f"I - zA is singular at z={z}")
    return z * _resolvent_solve(M.T, t.b_tilde)


def sensitivity_metric(t: MpTableau, z: float, contraction: str = "signed") -> float:
    """Per-step growth of low-precision stage errors, ``|Psi| A_eps e``.

    ``contraction="signed"`` evaluates ``|Psi A_eps e|``; ``"absolute"``
    evaluates the componentwise bound ``sum_j |Psi_j| (A_eps e)_j``.  The two
    agree whenever a single stage carries an ``A_eps`` entry (IMR, and every
    method at ``z = 0``).
    """
    psi = _psi_row(t, z)
    ae = np.abs(t.A_eps) @ np.ones(t.s)
    if contraction == "signed":
        return float(abs(psi @ ae))
    if contraction == "absolute":
        return float(np.abs(psi) @ ae)
    raise ValueError(f"unknown contraction {contraction!r}")


@dataclass
class SensitivityCurve:
    method: str
    z_values: np.ndarray
    metric: np.ndarray


def sensitivity_curve(t: MpTableau, z_values, contraction: str = "signed") -> SensitivityCurve:
    z = np.asarray(z_values, dtype=float)
    return SensitivityCurve(t.label, z, np.array([sensitivity_metric(t, v, contraction) for v in z]))


def roundoff_growth_bound(t: MpTableau, z: float, eps: float, n_steps: int, dt: float = 1.0,
                          mode: str = "scaled") -> float:
    """Upper bound on the accumulated low-precision error after ``n_steps``.

    Per step the error grows by at most ``|1 + Psi e|`` and gains
    ``eps/2 * dt * |Psi| A_eps e`` (``mode="scaled"``) or ``eps/2 * |Psi| A_eps e``
    (``mode="recast"``, stage values rounded rather than perturbed through
    ``F``).  Returns the smaller of the n-step linear sum and, when
    ``|1 + Psi e| < 1``, the geometric-series cap.
    """
    if mode not in ("scaled", "recast"):
        raise ValueError(f"unknown mode {mode!r}")
    amp = abs(complex(t.stability_function(z)))
    if amp > 1 + STABLE_TOL:
        raise ValueError(f"|1 + Psi e| = {amp:.6g} > 1: the method is unstable at z={z}")
    if eps == 0 or n_steps == 0:
        return 0.0
    per_step = 0.5 * eps * sensitivity_metric(t, z, "absolute") * (dt if mode == "scaled" else 1.0)
    linear = per_step * n_steps
    if amp < 1:
        return min(linear, per_step / (1 - amp))
    return linear


def closed_form_imr_perturbation(z: float, c: int) -> float:
    """``(z/2)^(c+1) / (1 - z/2)``: response of IMR with ``c`` corrections to a unit stage perturbation."""
    if z == 2:
        raise ZeroDivisionError("pole at z = 2")
    return (z / 2) ** (c + 1) / (1 - z / 2)
