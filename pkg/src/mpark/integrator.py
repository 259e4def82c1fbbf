"""Time stepping of MP-ARK methods under a (high, low) precision pair."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .newton import NewtonConfig, NotConverged, SingularJacobian, solve_stage
from .precision import (EXTENDED, PrecisionLevel, PrecisionPair, RangeFault, as_float64,
                        check_finite, eval_low, is_finite, max_abs, to_level)
from .problems import OdeProblem
from .tableaus import MpTableau


def as_fraction(dt) -> Fraction:
    """Exact value of a step size given as float, int, Fraction or ``"p/q"`` text."""
    if isinstance(dt, str):
        return Fraction(dt.strip())
    return Fraction(dt)


@dataclass(frozen=True)
class IntegratorConfig:
    tableau: MpTableau
    pair: PrecisionPair
    dt: Fraction | float
    steps: int | None = None
    newton_max_iters: int = 20
    newton_tol_factor: float = 10.0
    store_every: int = 0
    # abort when ||u||_inf exceeds this (None disables the check)
    blowup_threshold: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "dt", as_fraction(self.dt))
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1")

    def resolve_steps(self, t_final: float) -> int:
        if self.steps is not None:
            return self.steps
        n = round(Fraction(t_final) / self.dt)
        if n < 1:
            raise ValueError(f"dt={self.dt} exceeds t_final={t_final}")
        if abs(float(n * self.dt) - t_final) > 1e-12 * max(1.0, abs(t_final)):
            raise ValueError(f"dt={self.dt} does not divide t_final={t_final}")
        return n

    def newton_config(self, level: PrecisionLevel) -> NewtonConfig:
        return NewtonConfig(level, self.newton_max_iters, self.newton_tol_factor)


@dataclass
class StepStats:
    newton_iters: int = 0
    max_residual: float = 0.0


@dataclass
class Trajectory:
    times: list[float]
    states: list[np.ndarray]
    newton_iters: np.ndarray
    stage_residuals: np.ndarray
    final: object = None
    steps: int = 0

    @property
    def newton_iters_mean(self) -> float:
        return float(self.newton_iters.mean()) if self.newton_iters.size else 0.0


class IntegrationFailed(RuntimeError):
    """A run aborted; ``partial`` holds the trajectory up to the last good step."""

    def __init__(self, status: str, step: int, partial: Trajectory, cause: BaseException | None = None):
        super().__init__(f"integration failed at step {step}: {status}"
                         + (f" ({cause})" if cause else ""))
        self.status = status
        self.step = step
        self.partial = partial
        self.cause = cause


class _Plan:
    """Step-size scaled coefficients rounded once into the high level."""

    def __init__(self, cfg: IntegratorConfig):
        t = cfg.tableau
        high = cfg.pair.high
        dt = cfg.dt
        s = t.s

        def scaled(exact):
            return to_level(Fraction(exact) * dt, high)

        self.s = s
        self.kind = [t.stage_kind(i) for i in range(s)]
        self.diag = [t.A_eps_exact[i, i] if self.kind[i] == "low" else t.A_exact[i, i] for i in range(s)]
        self.hi_terms = [[(j, scaled(t.A_exact[i, j])) for j in range(i) if t.A_exact[i, j] != 0] for i in range(s)]
        self.lo_terms = [[(j, scaled(t.A_eps_exact[i, j])) for j in range(i) if t.A_eps_exact[i, j] != 0]
                         for i in range(s)]
        self.b_hi = [(j, scaled(t.b_exact[j])) for j in range(s) if t.b_exact[j] != 0]
        self.b_lo = [(j, scaled(t.b_eps_exact[j])) for j in range(s) if t.b_eps_exact[j] != 0]
        self.A_eps = t.A_eps
        self.dt = dt
        self.pair = cfg.pair
        self.newton_low = cfg.newton_config(cfg.pair.low)
        self.newton_high = cfg.newton_config(cfg.pair.high)


def _step(u, plan: _Plan, problem: OdeProblem, perturbation=None, stats: StepStats | None = None):
    high, low = plan.pair.high, plan.pair.low
    ys: list = [None] * plan.s
    f_hi: dict[int, object] = {}
    f_lo: dict[int, object] = {}

    def F(j):
        if j not in f_hi:
            f_hi[j] = check_finite(to_level(problem.rhs(ys[j]), high), high, "F")
        return f_hi[j]

    def F_eps(j):
        if j not in f_lo:
            f_lo[j] = to_level(eval_low(problem.rhs, ys[j], low), high)
        return f_lo[j]

    for i in range(plan.s):
        base = u
        for j, c in plan.hi_terms[i]:
            base = base + c * F(j)
        for j, c in plan.lo_terms[i]:
            base = base + c * F_eps(j)
        if perturbation is not None:
            # stand-in for dt*(F_eps - F): adds sum_j A_eps[i, j] q_j to the stage
            inject = sum(plan.A_eps[i, j] * perturbation[j] for j in range(i + 1) if plan.A_eps[i, j] != 0)
            if not np.isscalar(inject) or inject != 0:
                base = base + to_level(np.asarray(inject), high)
        kind = plan.kind[i]
        if kind == "explicit":
            ys[i] = base
            continue
        cfg = plan.newton_low if kind == "low" else plan.newton_high
        res = solve_stage(base, plan.diag[i], plan.dt, problem.rhs, problem.jac, cfg)
        ys[i] = to_level(res.y, high)
        if stats is not None:
            stats.newton_iters += res.iterations
            stats.max_residual = max(stats.max_residual, res.residual_norm)
    out = u
    for j, c in plan.b_hi:
        out = out + c * F(j)
    for j, c in plan.b_lo:
        out = out + c * F_eps(j)
    return check_finite(out, high, "state")


def step(u_n, cfg: IntegratorConfig, problem: OdeProblem, perturbation=None, stats: StepStats | None = None):
    """Advance one step from ``u_n``.

    ``perturbation`` optionally injects per-stage values ``q_j`` in place of
    the scaled rounding error ``dt * (F_eps - F)``; used to check the
    perturbation analysis.
    """
    u = to_level(u_n, cfg.pair.high)
    if u.ndim == 0:
        u = u.reshape(1)
    return _step(u, _Plan(cfg), problem, perturbation, stats)


def integrate(problem: OdeProblem, cfg: IntegratorConfig) -> Trajectory:
    steps = cfg.resolve_steps(problem.t_final)
    plan = _Plan(cfg)
    high = cfg.pair.high
    u = problem.initial(high)
    dt = float(cfg.dt)
    times, states = [0.0], [as_float64(u)]
    iters = np.zeros(steps, dtype=np.int64)
    resid = np.zeros(steps)
    traj = Trajectory(times, states, iters, resid, final=u, steps=0)
    for n in range(steps):
        stats = StepStats()
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                u = _step(u, plan, problem, stats=stats)
        except (NotConverged, SingularJacobian) as exc:
            raise IntegrationFailed("not_converged", n, _truncate(traj, n), exc) from exc
        except RangeFault as exc:
            raise IntegrationFailed("overflow", n, _truncate(traj, n), exc) from exc
        iters[n] = stats.newton_iters
        resid[n] = stats.max_residual
        traj.final, traj.steps = u, n + 1
        if cfg.blowup_threshold is not None and max_abs(u) > cfg.blowup_threshold:
            raise IntegrationFailed("overflow", n + 1, _truncate(traj, n + 1))
        if cfg.store_every and (n + 1) % cfg.store_every == 0 and n + 1 != steps:
            times.append((n + 1) * dt)
            states.append(as_float64(u))
    times.append(steps * dt)
    states.append(as_float64(u))
    return traj


def _truncate(traj: Trajectory, n: int) -> Trajectory:
    return Trajectory(traj.times, traj.states, traj.newton_iters[:n], traj.stage_residuals[:n],
                      traj.final, n)


def rk4_reference(problem: OdeProblem, dt_ref, level: PrecisionLevel = EXTENDED):
    """Classical RK4 final state at ``level`` (double-double by default)."""
    dt = as_fraction(dt_ref)
    n = round(Fraction(problem.t_final) / dt)
    if n < 1 or abs(float(n * dt) - problem.t_final) > 1e-12 * max(1.0, problem.t_final):
        raise ValueError(f"dt_ref={dt_ref} does not divide t_final={problem.t_final}")
    h = to_level(dt, level)
    h2 = to_level(dt / 2, level)
    h6 = to_level(dt / 6, level)
    f = problem.rhs
    u = problem.initial(level)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            k1 = f(u)
            k2 = f(u + h2 * k1)
            k3 = f(u + h2 * k2)
            k4 = f(u + h * k3)
            u = u + h6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not is_finite(u):
        raise RangeFault(f"reference solution blew up at {level}")
    return u
