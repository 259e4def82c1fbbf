"""Mixed-precision additive Runge-Kutta tableaus and their order conditions.

A tableau carries two Butcher arrays: ``A``/``b`` multiply the high-precision
function ``F`` and ``A_eps``/``b_eps`` multiply its low-precision evaluation.
Explicit correction stages are spelled out as extra tableau rows, so a
corrected method is analysed exactly like any other tableau.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

METHODS = ("imr", "sdirk", "novela")


def _sqrt3(digits: int = 40) -> Fraction:
    scale = 10**digits
    return Fraction(math.isqrt(3 * scale * scale), scale)


GAMMA_EXACT = (_sqrt3() + 3) / 6
GAMMA = float(GAMMA_EXACT)

# Coefficients of the four-stage NovelA method, exactly as printed (15 digits).
NOVELA_A = {
    (1, 0): "0.211324865405187",
    (2, 0): "0.709495523817170",
    (2, 1): "-0.865314250619423",
    (3, 0): "0.705123240545107",
    (3, 1): "0.943370088535775",
    (3, 2): "-0.859818194486069",
}
NOVELA_A_EPS = {
    (0, 0): "0.788675134594813",
    (2, 0): "0.051944240459852",
    (2, 2): "0.788675134594813",
}


def _frac_matrix(s: int) -> np.ndarray:
    m = np.empty((s, s), dtype=object)
    m.fill(Fraction(0))
    return m


def _frac_vector(s: int) -> np.ndarray:
    v = np.empty(s, dtype=object)
    v.fill(Fraction(0))
    return v


@dataclass(frozen=True, eq=False)
class MpTableau:
    """Coefficient arrays of a mixed-precision ARK method.

    The float64 arrays are derived from ``exact`` (object arrays of
    :class:`fractions.Fraction`) so that higher working precisions can pick
    up more accurate coefficients.
    """

    name: str
    A_exact: np.ndarray
    A_eps_exact: np.ndarray
    b_exact: np.ndarray
    b_eps_exact: np.ndarray
    corrections: int = 0
    order: int = 1
    A: np.ndarray = field(init=False, repr=False)
    A_eps: np.ndarray = field(init=False, repr=False)
    b: np.ndarray = field(init=False, repr=False)
    b_eps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = len(self.b_exact)
        for arr, shape in ((self.A_exact, (s, s)), (self.A_eps_exact, (s, s)), (self.b_eps_exact, (s,))):
            if arr.shape != shape:
                raise ValueError(f"tableau {self.name}: expected shape {shape}, got {arr.shape}")
        to_f = np.vectorize(float, otypes=[np.float64])
        for exact, name in ((self.A_exact, "A"), (self.A_eps_exact, "A_eps"),
                            (self.b_exact, "b"), (self.b_eps_exact, "b_eps")):
            arr = to_f(exact)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(np.triu(self.A, 1)) or np.any(np.triu(self.A_eps, 1)):
            raise ValueError(f"tableau {self.name} is not diagonally implicit")
        if np.any((np.diag(self.A) != 0) & (np.diag(self.A_eps) != 0)):
            raise ValueError(f"tableau {self.name}: a stage is implicit in both precisions")

    @property
    def s(self) -> int:
        return len(self.b)

    @property
    def A_tilde(self) -> np.ndarray:
        return self.A + self.A_eps

    @property
    def b_tilde(self) -> np.ndarray:
        return self.b + self.b_eps

    @property
    def c_tilde(self) -> np.ndarray:
        return self.A_tilde.sum(axis=1)

    @property
    def c_eps(self) -> np.ndarray:
        return self.A_eps.sum(axis=1)

    def stage_kind(self, i: int) -> str:
        """``"low"``, ``"high"`` (implicit at that precision) or ``"explicit"``."""
        if self.A_eps[i, i] != 0:
            return "low"
        if self.A[i, i] != 0:
            return "high"
        return "explicit"

    def stability_function(self, z):
        """Exact-precision amplification factor ``1 + z b~ (I - z A~)^-1 e``."""
        z = np.asarray(z, dtype=np.complex128)
        s = self.s
        M = np.eye(s) - z[..., None, None] * self.A_tilde
        x = np.linalg.solve(M, np.broadcast_to(np.ones(s), z.shape + (s,))[..., None])[..., 0]
        return 1 + z * (x @ self.b_tilde)

    @property
    def label(self) -> str:
        if self.name == "novela":
            return "novela"
        return f"{self.name}(m={self.corrections})"


def imr_tableau(m: int = 0) -> MpTableau:
    """Implicit midpoint rule with ``m`` explicit high-precision corrections."""
    if m < 0:
        raise ValueError("number of corrections must be >= 0")
    s = m + 1
    half = Fraction(1, 2)
    A, Ae, b = _frac_matrix(s), _frac_matrix(s), _frac_vector(s)
    Ae[0, 0] = half
    for k in range(1, s):
        A[k, k - 1] = half
    b[s - 1] = Fraction(1)
    return MpTableau("imr", A, Ae, b, _frac_vector(s), corrections=m, order=2)


def sdirk_tableau(m: int = 1) -> MpTableau:
    """Two-stage third-order SDIRK; ``m - 1`` correction stages follow each implicit stage."""
    if m < 1:
        raise ValueError("sdirk needs m >= 1 (m = 1 is the uncorrected method)")
    g = GAMMA_EXACT
    s = 2 * m
    A, Ae, b = _frac_matrix(s), _frac_matrix(s), _frac_vector(s)
    Ae[0, 0] = g
    for k in range(1, m):
        A[k, k - 1] = g
    Ae[m, m] = g
    for k in range(m, s):
        A[k, m - 1] = 1 - 2 * g
    for k in range(m + 1, s):
        A[k, k - 1] = g
    b[m - 1] = Fraction(1, 2)
    b[s - 1] = Fraction(1, 2)
    return MpTableau("sdirk", A, Ae, b, _frac_vector(s), corrections=m, order=3)


def novel_a_tableau() -> MpTableau:
    s = 4
    A, Ae, b = _frac_matrix(s), _frac_matrix(s), _frac_vector(s)
    for (i, j), v in NOVELA_A.items():
        A[i, j] = Fraction(v)
    for (i, j), v in NOVELA_A_EPS.items():
        Ae[i, j] = Fraction(v)
    b[1] = b[3] = Fraction(1, 2)
    return MpTableau("novela", A, Ae, b, _frac_vector(s), corrections=0, order=3)


def build_tableau(method: str, corrections: int | None = None) -> MpTableau:
    """Look up a method by CLI name (``imr``, ``sdirk``, ``novela``)."""
    key = method.strip().lower()
    if key == "imr":
        return imr_tableau(0 if corrections is None else corrections)
    if key == "sdirk":
        return sdirk_tableau(1 if corrections is None else corrections)
    if key == "novela":
        if corrections not in (None, 0):
            raise ValueError("novela takes no corrections")
        return novel_a_tableau()
    raise ValueError(f"unknown method {method!r}; expected imr|sdirk|novela")


# ---------------------------------------------------------------------------
# order conditions

SCHEME_CONDITIONS = ("btilde*e-1", "btilde*ctilde-1/2", "btilde*(ctilde.ctilde)-1/3",
                     "btilde*Atilde*ctilde-1/6")
SCHEME_ORDER = dict(zip(SCHEME_CONDITIONS, (1, 2, 3, 3)))

# (expansion term, non-smooth key, smooth key)
PERTURBATION_ROWS = (
    ("eps*dt", "abs(b_eps)*e", "b_eps*e"),
    ("eps*dt^2", "abs(b_eps)*abs(ctilde)", "b_eps*ctilde"),
    ("eps*dt^2", "abs(btilde)*abs(c_eps)", "btilde*c_eps"),
    ("eps^2*dt^2", "abs(b_eps)*abs(c_eps)", "b_eps*c_eps"),
    ("eps*dt^3", "abs(b_eps)*abs(Atilde)*abs(ctilde)", "b_eps*Atilde*ctilde"),
    ("eps*dt^3", "abs(btilde)*abs(A_eps)*abs(ctilde)", "btilde*A_eps*ctilde"),
    ("eps*dt^3", "abs(btilde)*abs(Atilde)*abs(c_eps)", "btilde*Atilde*c_eps"),
    ("eps*dt^3", "abs(b_eps)*(ctilde.ctilde)", "b_eps*(ctilde.ctilde)"),
    ("eps*dt^3", "abs(btilde)*(abs(ctilde).abs(c_eps))", "btilde*(ctilde.c_eps)"),
    ("eps^2*dt^3", "abs(b_eps)*abs(A_eps)*abs(ctilde)", "b_eps*A_eps*ctilde"),
    ("eps^2*dt^3", "abs(b_eps)*abs(Atilde)*abs(c_eps)", "b_eps*Atilde*c_eps"),
    ("eps^2*dt^3", "abs(btilde)*abs(A_eps)*abs(c_eps)", "btilde*A_eps*c_eps"),
    ("eps^2*dt^3", "abs(b_eps)*(abs(c_eps).abs(ctilde))", "b_eps*(c_eps.ctilde)"),
    ("eps^3*dt^3", "abs(b_eps)*abs(A_eps)*abs(c_eps)", "b_eps*A_eps*c_eps"),
    ("eps^3*dt^3", "abs(b_eps)*(c_eps.c_eps)", "b_eps*(c_eps.c_eps)"),
)


@dataclass
class OrderReport:
    method: str
    scheme_residuals: dict[str, float]
    perturbation_residuals_nonsmooth: dict[str, float]
    perturbation_residuals_smooth: dict[str, float]

    def expansion_term(self, key: str) -> str:
        for term, ns, sm in PERTURBATION_ROWS:
            if key in (ns, sm):
                return term
        raise KeyError(key)

    def format(self) -> str:
        lines = [f"order report: {self.method}", "", "scheme consistency residuals:"]
        for k, v in self.scheme_residuals.items():
            lines.append(f"  {k:<32s} {v: .3e}")
        lines += ["", f"  {'term':<11s} {'non-smooth':<40s} {'value':>10s}   {'smooth':<26s} {'value':>10s}"]
        for term, ns, sm in PERTURBATION_ROWS:
            lines.append(f"  {term:<11s} {ns:<40s} {self.perturbation_residuals_nonsmooth[ns]: .3e}"
                         f"   {sm:<26s} {self.perturbation_residuals_smooth[sm]: .3e}")
        return "\n".join(lines)


def perturbation_values(b, be, A, Ae, c, ce, absolute: bool) -> list[float]:
    """Row values of the perturbation table for raw coefficient arrays."""
    f = np.abs if absolute else (lambda x: x)
    b, be, A, Ae, c, ce = (f(x) for x in (b, be, A, Ae, c, ce))
    e = np.ones_like(b)
    return [
        be @ e, be @ c, b @ ce, be @ ce,
        be @ A @ c, b @ Ae @ c, b @ A @ ce, be @ (c * c), b @ (c * ce),
        be @ Ae @ c, be @ A @ ce, b @ Ae @ ce, be @ (ce * c),
        be @ Ae @ ce, be @ (ce * ce),
    ]


def order_report(t: MpTableau) -> OrderReport:
    """Evaluate scheme residuals to third order and every perturbation row."""
    A, Ae, b, be = t.A_tilde, t.A_eps, t.b_tilde, t.b_eps
    c, ce = t.c_tilde, t.c_eps
    scheme = dict(zip(SCHEME_CONDITIONS, (
        float(b.sum() - 1), float(b @ c - 0.5), float(b @ (c * c) - 1 / 3), float(b @ A @ c - 1 / 6))))
    ns = perturbation_values(b, be, A, Ae, c, ce, absolute=True)
    sm = perturbation_values(b, be, A, Ae, c, ce, absolute=False)
    return OrderReport(
        method=t.label,
        scheme_residuals=scheme,
        perturbation_residuals_nonsmooth={row[1]: float(v) for row, v in zip(PERTURBATION_ROWS, ns)},
        perturbation_residuals_smooth={row[2]: float(v) for row, v in zip(PERTURBATION_ROWS, sm)},
    )


# ---------------------------------------------------------------------------
# plain-text matrix format

def format_tableau(t: MpTableau) -> str:
    """Serialise as rows of decimal literals (round-trips float64 exactly)."""
    def rows(arr):
        arr = np.atleast_2d(arr)
        return [" ".join(repr(float(x)) for x in row) for row in arr]

    out = [f"# method {t.name}", f"# corrections {t.corrections}", f"# order {t.order}", f"stages {t.s}"]
    for label, arr in (("A", t.A), ("A_eps", t.A_eps), ("b", t.b), ("b_eps", t.b_eps)):
        out.append(label)
        out.extend(rows(arr))
    return "\n".join(out) + "\n"


def parse_tableau(text: str) -> MpTableau:
    meta = {"method": "custom", "corrections": "0", "order": "1"}
    blocks: dict[str, list[list[float]]] = {}
    current = None
    s = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2:
                meta[parts[0]] = parts[1]
            continue
        if line.startswith("stages"):
            s = int(line.split()[1])
            continue
        if line in ("A", "A_eps", "b", "b_eps"):
            current = line
            blocks[current] = []
            continue
        if current is None:
            raise ValueError(f"unexpected line {raw!r}")
        blocks[current].append([float(x) for x in line.split()])
    missing = {"A", "A_eps", "b", "b_eps"} - set(blocks)
    if missing or s is None:
        raise ValueError(f"incomplete tableau text (missing {sorted(missing) or 'stages'})")

    def frac(arr):
        a = np.asarray(arr, dtype=np.float64)
        out = np.empty(a.shape, dtype=object)
        for idx, v in np.ndenumerate(a):
            out[idx] = Fraction(v)
        return out

    return MpTableau(
        name=meta["method"],
        A_exact=frac(blocks["A"]).reshape(s, s),
        A_eps_exact=frac(blocks["A_eps"]).reshape(s, s),
        b_exact=frac(blocks["b"]).reshape(s),
        b_eps_exact=frac(blocks["b_eps"]).reshape(s),
        corrections=int(meta["corrections"]),
        order=int(meta["order"]),
    )
