"""Convergence sweeps, efficiency timing and largest-stable-step searches."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .integrator import IntegrationFailed, IntegratorConfig, as_fraction, integrate, rk4_reference
from .precision import DOUBLE, EXTENDED, PrecisionLevel, PrecisionPair, max_abs, to_level
from .problems import OdeProblem, build_problem
from .tableaus import MpTableau, build_tableau

CSV_COLUMNS = ("method", "corrections", "pair", "dt", "error", "wall_time_s", "status",
               "newton_iters_mean")
ERROR_NORM = "max"
BLOWUP_FACTOR = 1e3


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    alpha: float = 1.0
    nx: int | None = None
    lam: float = -1.0

    def build(self) -> OdeProblem:
        return _problem_cache(self)

    def to_dict(self) -> dict:
        return {"name": self.name, "alpha": self.alpha, "nx": self.nx, "lam": self.lam}

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        return cls(str(d["name"]), float(d.get("alpha", 1.0)), d.get("nx"), float(d.get("lam", -1.0)))


_PROBLEMS: dict[ProblemSpec, OdeProblem] = {}
_PROBLEMS_LOCK = threading.Lock()


def _problem_cache(spec: ProblemSpec) -> OdeProblem:
    with _PROBLEMS_LOCK:
        if spec not in _PROBLEMS:
            _PROBLEMS[spec] = build_problem(spec.name, alpha=spec.alpha, nx=spec.nx, lam=spec.lam)
        return _PROBLEMS[spec]


@dataclass(frozen=True)
class MethodSpec:
    method: str
    corrections: int = 0

    def tableau(self) -> MpTableau:
        return build_tableau(self.method, self.corrections)

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        """``"sdirk:2"``, or a bare name for the method's default corrections."""
        name, _, m = text.partition(":")
        name = name.strip().lower()
        return cls(name, int(m) if m else build_tableau(name).corrections)

    def __str__(self) -> str:
        return f"{self.method}:{self.corrections}"


def _divides(dt: Fraction, t_final: float) -> bool:
    n = round(Fraction(t_final) / dt)
    return n >= 1 and abs(float(n * dt) - t_final) <= 1e-12 * max(1.0, abs(t_final))


def power_of_two_dts(kmin: int, kmax: int, scale=1) -> tuple[Fraction, ...]:
    """``scale * 2^-k`` for ``k = kmin..kmax`` (largest first)."""
    return tuple(Fraction(scale) / 2**k for k in range(kmin, kmax + 1))


@dataclass(frozen=True)
class SweepSpec:
    problem: ProblemSpec
    methods: tuple[MethodSpec, ...]
    pairs: tuple[PrecisionPair, ...]
    dts: tuple[Fraction, ...]
    dt_ref: Fraction | None = None
    ref_level: PrecisionLevel = EXTENDED
    repetitions: int = 1
    newton_max_iters: int = 20
    newton_tol_factor: float = 10.0
    check_reference: bool = False
    name: str = "sweep"

    def __post_init__(self):
        if not self.methods or not self.pairs or not self.dts:
            raise ValueError("sweep needs at least one method, pair and dt")
        dts = tuple(sorted((as_fraction(d) for d in self.dts), reverse=True))
        object.__setattr__(self, "dts", dts)
        ref = min(dts) / 20 if self.dt_ref is None else as_fraction(self.dt_ref)
        object.__setattr__(self, "dt_ref", ref)
        if ref > min(dts) / 20:
            raise ValueError(f"dt_ref={ref} must be <= min(dt)/20 = {min(dts) / 20}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        t_final = self.problem.build().t_final
        for d in (*dts, ref):
            if d <= 0 or not _divides(d, t_final):
                raise ValueError(f"dt={d} does not divide t_final={t_final}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "problem": self.problem.to_dict(),
            "methods": [str(m) for m in self.methods],
            "pairs": [str(p) for p in self.pairs],
            "dts": [str(d) for d in self.dts],
            "dt_ref": str(self.dt_ref),
            "ref_level": self.ref_level.label,
            "repetitions": self.repetitions,
            "newton_max_iters": self.newton_max_iters,
            "newton_tol_factor": self.newton_tol_factor,
            "check_reference": self.check_reference,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        if "dts" in d:
            dts = tuple(as_fraction(x) for x in d["dts"])
        else:
            kmin, kmax = d["dt_exponents"]
            dts = power_of_two_dts(int(kmin), int(kmax), d.get("dt_scale", 1))
        methods = d.get("methods") or [d["method"]]
        return cls(
            problem=ProblemSpec.from_dict(d["problem"]),
            methods=tuple(MethodSpec.parse(m) if isinstance(m, str) else MethodSpec(m["method"], int(m.get("corrections", 0)))
                          for m in methods),
            pairs=tuple(PrecisionPair.parse(p) for p in d["pairs"]),
            dts=dts,
            dt_ref=as_fraction(d["dt_ref"]) if d.get("dt_ref") is not None else None,
            ref_level=PrecisionLevel.parse(d.get("ref_level", "f128")),
            repetitions=int(d.get("repetitions", 1)),
            newton_max_iters=int(d.get("newton_max_iters", 20)),
            newton_tol_factor=float(d.get("newton_tol_factor", 10.0)),
            check_reference=bool(d.get("check_reference", False)),
            name=str(d.get("name", "sweep")),
        )


# ---------------------------------------------------------------------------
# reference solutions

_REFS: dict[tuple, object] = {}
_REFS_LOCK = threading.Lock()


def reference_solution(problem: ProblemSpec, dt_ref, level: PrecisionLevel = EXTENDED):
    """RK4 final state, memoised per ``(problem, dt_ref, level)``."""
    key = (problem, as_fraction(dt_ref), level.label)
    with _REFS_LOCK:
        if key not in _REFS:
            _REFS[key] = rk4_reference(problem.build(), key[1], level)
        return _REFS[key]


def final_error(u, ref) -> float:
    """``||u - ref||_inf`` with both promoted to Extended first."""
    return max_abs(to_level(u, EXTENDED) - to_level(ref, EXTENDED))


# ---------------------------------------------------------------------------
# reports

@dataclass
class ConvergenceRow:
    method: str
    corrections: int
    pair: str
    dt: Fraction
    error: float
    wall_time_s: float
    status: str
    newton_iters_mean: float

    def as_csv(self) -> list[str]:
        return [self.method, str(self.corrections), self.pair, str(self.dt), f"{self.error:.17g}",
                f"{self.wall_time_s:.6f}", self.status, f"{self.newton_iters_mean:.6g}"]


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    meta: dict = field(default_factory=dict)

    def select(self, method: str, corrections: int, pair) -> list[ConvergenceRow]:
        pair = str(pair)
        return sorted((r for r in self.rows
                       if r.method == method and r.corrections == corrections and r.pair == pair),
                      key=lambda r: r.dt, reverse=True)

    def points(self, method: str, corrections: int, pair) -> list[tuple[float, float]]:
        """``(dt, error)`` of the successful runs, largest dt first."""
        return [(float(r.dt), r.error) for r in self.select(method, corrections, pair) if r.status == "ok"]

    def series(self) -> list[tuple[str, int, str]]:
        seen = []
        for r in self.rows:
            key = (r.method, r.corrections, r.pair)
            if key not in seen:
                seen.append(key)
        return seen

    def observed_orders(self, window=None) -> dict[tuple[str, int, str], float]:
        out = {}
        for key in self.series():
            pts = self.points(*key)
            try:
                out[key] = observed_order(pts, window)
            except ValueError:
                out[key] = math.nan
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.as_csv())
        return buf.getvalue()


def read_csv(path) -> ConvergenceReport:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ConvergenceRow(rec["method"], int(rec["corrections"]), rec["pair"],
                                       Fraction(rec["dt"]), float(rec["error"]),
                                       float(rec["wall_time_s"]), rec["status"],
                                       float(rec["newton_iters_mean"])))
    return ConvergenceReport(rows)


def atomic_write(path, text: str) -> Path:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
    return path


def write_meta(path, meta: dict) -> Path:
    return atomic_write(path, json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")


# ---------------------------------------------------------------------------
# slopes and classification

def observed_order(points, window=None) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dt)``.

    ``window=(dt_lo, dt_hi)`` restricts to points with ``dt_lo <= dt <= dt_hi``.
    Any zero error makes the slope undefined; ``+inf`` is returned instead.
    """
    pts = [(float(d), float(e)) for d, e in points]
    if window is not None:
        lo, hi = (float(w) for w in window)
        pts = [(d, e) for d, e in pts if lo <= d <= hi]
    if len({d for d, _ in pts}) < 2:
        raise ValueError("observed_order needs >= 2 distinct dt values")
    if any(e < 0 or not math.isfinite(e) for _, e in pts):
        raise ValueError("errors must be finite and non-negative")
    if any(e == 0 for _, e in pts):
        return math.inf
    x = np.log([d for d, _ in pts])
    y = np.log([e for _, e in pts])
    return float(np.polyfit(x, y, 1)[0])


def classify_convergence(points, design_order: float) -> str:
    """``"plateau"``, ``"converging"`` or ``"irregular"`` for a sweep ordered by dt.

    Plateau: the three largest dt converge at ``>= design_order - 0.5`` while
    the three smallest have slope below 0.5.
    """
    pts = sorted(points, key=lambda p: -p[0])
    if len(pts) < 3:
        raise ValueError("classification needs >= 3 points")
    head = observed_order(pts[:3])
    tail = observed_order(pts[-3:])
    if head >= design_order - 0.5 and tail < 0.5:
        return "plateau"
    if tail >= design_order - 0.5:
        return "converging"
    return "irregular"


def plateau_onset(points, design_order: float) -> float | None:
    """dt after the last halving that still converges at ``>= design_order - 0.5``.

    ``None`` when the final halving still converges at the design rate (no
    plateau within the sweep); the largest dt when no halving ever does.
    """
    pts = sorted(points, key=lambda p: -p[0])
    if len(pts) < 2:
        raise ValueError("plateau_onset needs >= 2 points")
    strong = [i for i in range(len(pts) - 1) if observed_order(pts[i:i + 2]) >= design_order - 0.5]
    if not strong:
        return pts[0][0]
    last = strong[-1]
    if last == len(pts) - 2:
        return None
    return pts[last + 1][0]


def time_at_error(pairs, target: float) -> float | None:
    """Wall time at ``target`` error, log-log interpolated between bracketing runs.

    ``pairs`` is a sequence of ``(error, wall_time)``.  Returns ``None`` when
    no two runs bracket the target.
    """
    pts = sorted((e, t) for e, t in pairs if e > 0 and t > 0 and math.isfinite(e))
    for (e0, t0), (e1, t1) in zip(pts, pts[1:]):
        if e0 <= target <= e1:
            if e0 == e1:
                return min(t0, t1)
            w = (math.log(target) - math.log(e0)) / (math.log(e1) - math.log(e0))
            return math.exp(math.log(t0) + w * (math.log(t1) - math.log(t0)))
    if pts and pts[0][0] == target:
        return pts[0][1]
    return None


# ---------------------------------------------------------------------------
# sweeps

def _run_cell(spec: SweepSpec, method: MethodSpec, pair: PrecisionPair, dt: Fraction, ref,
              repetitions: int, warmup: bool) -> ConvergenceRow:
    problem = spec.problem.build()
    cfg = IntegratorConfig(method.tableau(), pair, dt, newton_max_iters=spec.newton_max_iters,
                           newton_tol_factor=spec.newton_tol_factor)
    times = []
    t0 = time.perf_counter()
    try:
        if warmup:
            integrate(problem, cfg)
        for _ in range(repetitions):
            t0 = time.perf_counter()
            traj = integrate(problem, cfg)
            times.append(time.perf_counter() - t0)
    except IntegrationFailed as exc:
        return ConvergenceRow(method.method, method.corrections, str(pair), dt, math.nan,
                              time.perf_counter() - t0, exc.status,
                              float(exc.partial.newton_iters.mean()) if exc.partial.steps else 0.0)
    return ConvergenceRow(method.method, method.corrections, str(pair), dt, final_error(traj.final, ref),
                          statistics.median(times), "ok", traj.newton_iters_mean)


def _sweep(spec: SweepSpec, threads: int | None, repetitions: int, warmup: bool) -> ConvergenceReport:
    ref = reference_solution(spec.problem, spec.dt_ref, spec.ref_level)
    cells = [(m, p, d) for m in spec.methods for p in spec.pairs for d in spec.dts]
    if threads == 1:
        rows = [_run_cell(spec, m, p, d, ref, repetitions, warmup) for m, p, d in cells]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda c: _run_cell(spec, *c, ref, repetitions, warmup), cells))
    meta = sweep_meta(spec)
    if spec.check_reference:
        meta["reference_check"] = check_reference(spec, rows)
    return ConvergenceReport(rows, meta)


def run_convergence(spec: SweepSpec, threads: int | None = None) -> ConvergenceReport:
    """Integrate every (method, pair, dt) cell; per-cell failures are recorded, never raised."""
    return _sweep(spec, threads, spec.repetitions, warmup=False)


def run_efficiency(spec: SweepSpec) -> ConvergenceReport:
    """As :func:`run_convergence`, timed one cell at a time after a warm-up run."""
    if spec.repetitions < 3:
        raise ValueError("efficiency runs need repetitions >= 3")
    return _sweep(spec, 1, spec.repetitions, warmup=True)


def check_reference(spec: SweepSpec, rows) -> dict:
    """Compare references at ``dt_ref`` and ``dt_ref/2`` against the smallest measured error."""
    a = reference_solution(spec.problem, spec.dt_ref, spec.ref_level)
    b = reference_solution(spec.problem, spec.dt_ref / 2, spec.ref_level)
    diff = final_error(a, b)
    errs = [r.error for r in rows if r.status == "ok" and r.error > 0]
    smallest = min(errs) if errs else math.nan
    return {"dt_ref_half": str(spec.dt_ref / 2), "difference": diff, "smallest_error": smallest,
            "passed": bool(errs) and diff <= 1e-2 * smallest}


def sweep_meta(spec: SweepSpec) -> dict:
    levels = {lvl.label: lvl.unit_roundoff for p in spec.pairs for lvl in (p.high, p.low)}
    levels[spec.ref_level.label] = spec.ref_level.unit_roundoff
    return {"config": spec.to_dict(), "error_norm": ERROR_NORM, "unit_roundoffs": levels,
            "reference": {"method": "rk4", "dt_ref": str(spec.dt_ref), "level": spec.ref_level.label}}


# ---------------------------------------------------------------------------
# largest stable dt

@dataclass
class LadderTrial:
    dt: Fraction
    status: str        # stable | overflow | not_converged | blowup
    max_norm: float
    error: float


@dataclass
class StableDtRow:
    method: str
    corrections: int
    pair: str
    largest_dt: Fraction | None
    trials: list[LadderTrial]
    ladder: tuple[Fraction, ...]

    @property
    def all_stable(self) -> bool:
        """True when every rung of the ladder was run and classified stable."""
        return len(self.trials) == len(self.ladder) and all(t.status == "stable" for t in self.trials)

    @property
    def label(self) -> str:
        if self.largest_dt is None:
            return "none"
        return "all" if self.all_stable else str(float(self.largest_dt))


@dataclass
class StableDtReport:
    rows: list[StableDtRow]
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("method", "corrections", "pair", "dt", "status", "max_norm", "error", "largest_stable_dt"))
        for r in self.rows:
            for t in r.trials:
                w.writerow((r.method, r.corrections, r.pair, str(t.dt), t.status, f"{t.max_norm:.17g}",
                            f"{t.error:.17g}", "" if r.largest_dt is None else str(r.largest_dt)))
        return buf.getvalue()


def ladder(dt_max, levels: int) -> tuple[Fraction, ...]:
    dt_max = as_fraction(dt_max)
    if dt_max <= 0 or levels < 1:
        raise ValueError("need dt_max > 0 and levels >= 1")
    return tuple(dt_max / 2**k for k in range(levels))


@dataclass(frozen=True)
class BlowupReference:
    state: np.ndarray
    norm: float
    threshold: float
    dt_ref: Fraction


def blowup_reference(problem: ProblemSpec, dt_ref, factor: float = BLOWUP_FACTOR) -> BlowupReference:
    """Double-precision RK4 reference and the threshold ``factor * ||u_ref||_inf``."""
    u = np.asarray(reference_solution(problem, dt_ref, DOUBLE), dtype=np.float64)
    norm = float(np.max(np.abs(u)))
    return BlowupReference(u, norm, factor * norm, as_fraction(dt_ref))


def run_trial(problem: ProblemSpec, method: MethodSpec, pair: PrecisionPair, dt, ref: BlowupReference,
              newton_max_iters: int = 20, newton_tol_factor: float = 10.0) -> LadderTrial:
    cfg = IntegratorConfig(method.tableau(), pair, dt, newton_max_iters=newton_max_iters,
                           newton_tol_factor=newton_tol_factor, blowup_threshold=ref.threshold)
    try:
        traj = integrate(problem.build(), cfg)
    except IntegrationFailed as exc:
        return LadderTrial(as_fraction(dt), exc.status, max_abs(exc.partial.final), math.nan)
    norm = max_abs(traj.final)
    err = final_error(traj.final, ref.state)
    return LadderTrial(as_fraction(dt), "stable" if err <= ref.threshold else "blowup", norm, err)


def find_largest_stable_dt(method: MethodSpec, pair: PrecisionPair, problem: ProblemSpec,
                           dt_max=Fraction(1, 20), levels: int = 7, *, full_scan: bool = False,
                           ref: BlowupReference | None = None, **newton) -> StableDtRow:
    """Walk ``dt_max, dt_max/2, ...`` and return the first rung classified stable.

    With ``full_scan`` every rung is run, so ``all_stable`` is meaningful.
    """
    rungs = ladder(dt_max, levels)
    if ref is None:
        ref = blowup_reference(problem, rungs[-1] / 20)
    trials, largest = [], None
    for dt in rungs:
        trial = run_trial(problem, method, pair, dt, ref, **newton)
        trials.append(trial)
        if trial.status == "stable" and largest is None:
            largest = dt
            if not full_scan:
                break
    return StableDtRow(method.method, method.corrections, str(pair), largest, trials, rungs)


def stable_dt_report(problem: ProblemSpec, methods, pairs, dt_max=Fraction(1, 20), levels: int = 7,
                     full_scan: bool = False, threads: int | None = None, **newton) -> StableDtReport:
    rungs = ladder(dt_max, levels)
    ref = blowup_reference(problem, rungs[-1] / 20)
    cells = [(m, p) for m in methods for p in pairs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(lambda c: find_largest_stable_dt(c[0], c[1], problem, dt_max, levels,
                                                              full_scan=full_scan, ref=ref, **newton),
                             cells))
    meta = {"problem": problem.to_dict(), "ladder": [str(d) for d in rungs], "blowup_factor": BLOWUP_FACTOR,
            "reference_norm": ref.norm, "threshold": ref.threshold, "reference_dt": str(ref.dt_ref),
            "reference_level": DOUBLE.label, "full_scan": full_scan, "error_norm": ERROR_NORM}
    return StableDtReport(rows, meta)
