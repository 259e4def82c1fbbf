"""Precision levels and emulated low-precision evaluation.

Half, Single and Double map onto numpy's IEEE binary16/32/64 dtypes, whose
elementwise arithmetic rounds every result to the operand format.  Extended
is a double-double format (:mod:`mpark.ddouble`).  Writing a right-hand side
with plain arithmetic operators therefore evaluates it "at" whatever level
its input array lives in.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from numbers import Integral

import numpy as np

from .ddouble import DDArray, dd


class RangeFault(ArithmeticError):
    """A value overflowed the exponent range of a precision level."""


class Format(enum.Enum):
    HALF = "f16"
    SINGLE = "f32"
    DOUBLE = "f64"
    EXTENDED = "f128"


@dataclass(frozen=True)
class PrecisionLevel:
    name: Format
    significand_bits: int
    exponent_range: tuple[int, int]

    @property
    def unit_roundoff(self) -> float:
        return 2.0 ** (-self.significand_bits)

    @property
    def label(self) -> str:
        return self.name.value

    @property
    def dtype(self):
        """numpy dtype backing this level (``None`` for double-double)."""
        return _DTYPES[self.name]

    def __lt__(self, other: "PrecisionLevel") -> bool:
        return self.significand_bits < other.significand_bits

    def __le__(self, other: "PrecisionLevel") -> bool:
        return self.significand_bits <= other.significand_bits

    def __gt__(self, other: "PrecisionLevel") -> bool:
        return self.significand_bits > other.significand_bits

    def __ge__(self, other: "PrecisionLevel") -> bool:
        return self.significand_bits >= other.significand_bits

    def __str__(self) -> str:
        return self.label

    @classmethod
    def parse(cls, text: str) -> "PrecisionLevel":
        key = text.strip().lower()
        aliases = {
            "f16": HALF, "half": HALF, "16": HALF, "float16": HALF,
            "f32": SINGLE, "single": SINGLE, "32": SINGLE, "float32": SINGLE,
            "f64": DOUBLE, "double": DOUBLE, "64": DOUBLE, "float64": DOUBLE,
            "f128": EXTENDED, "extended": EXTENDED, "128": EXTENDED, "quad": EXTENDED,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown precision {text!r}; expected f16|f32|f64|f128") from None


HALF = PrecisionLevel(Format.HALF, 11, (-14, 15))
SINGLE = PrecisionLevel(Format.SINGLE, 24, (-126, 127))
DOUBLE = PrecisionLevel(Format.DOUBLE, 53, (-1022, 1023))
# double-double: ~106 bits stored, but the arithmetic kernels only guarantee
# about 2**-104 relative error per operation, so that is what we report
EXTENDED = PrecisionLevel(Format.EXTENDED, 104, (-969, 1023))

LEVELS = (HALF, SINGLE, DOUBLE, EXTENDED)

_DTYPES = {
    Format.HALF: np.dtype(np.float16),
    Format.SINGLE: np.dtype(np.float32),
    Format.DOUBLE: np.dtype(np.float64),
    Format.EXTENDED: None,
}
_COMPLEX = {Format.SINGLE: np.dtype(np.complex64), Format.DOUBLE: np.dtype(np.complex128)}


@dataclass(frozen=True)
class PrecisionPair:
    high: PrecisionLevel
    low: PrecisionLevel

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError(f"low precision {self.low} exceeds high precision {self.high}")

    @property
    def label(self) -> str:
        return f"{self.high.label}/{self.low.label}"

    def __str__(self) -> str:
        return self.label

    @classmethod
    def parse(cls, text: str) -> "PrecisionPair":
        parts = text.split("/")
        if len(parts) == 1:
            lvl = PrecisionLevel.parse(parts[0])
            return cls(lvl, lvl)
        if len(parts) != 2:
            raise ValueError(f"bad precision pair {text!r}; expected e.g. f64/f16")
        return cls(PrecisionLevel.parse(parts[0]), PrecisionLevel.parse(parts[1]))


@dataclass(frozen=True)
class RoundingMode:
    kind: str = "nearest"
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("nearest", "stochastic"):
            raise ValueError(f"unknown rounding mode {self.kind!r}")
        if self.kind == "stochastic" and self.seed is None:
            raise ValueError("stochastic rounding needs a seed")

    @classmethod
    def stochastic(cls, seed: int) -> "RoundingMode":
        return cls("stochastic", int(seed) & 0xFFFFFFFFFFFFFFFF)


NEAREST_EVEN = RoundingMode()


def unit_roundoff(level: PrecisionLevel) -> float:
    return level.unit_roundoff


def level_of(x) -> PrecisionLevel:
    """Infer the precision level an array (or scalar) lives in."""
    if isinstance(x, DDArray):
        return EXTENDED
    dt = np.asarray(x).dtype
    if dt == np.float16:
        return HALF
    if dt in (np.float32, np.complex64):
        return SINGLE
    return DOUBLE


def _dd_to_numpy(x: DDArray, dtype) -> np.ndarray:
    # Rounding hi alone is only wrong when hi sits exactly on a rounding
    # midpoint of the target format and the tail lo breaks the tie.
    if dtype == np.float64:
        return x.hi + x.lo
    up_inf = np.asarray(np.inf, dtype=dtype)
    r = x.hi.astype(dtype)
    rf = r.astype(np.float64)
    up = np.nextafter(r, up_inf)
    down = np.nextafter(r, -up_inf)
    d = x.hi - rf
    out = np.where((d == (up.astype(np.float64) - rf) / 2) & (x.lo > 0), up, r)
    out = np.where((d == -(rf - down.astype(np.float64)) / 2) & (x.lo < 0), down, out)
    return out.astype(dtype)


def to_level(x, level: PrecisionLevel):
    """Round ``x`` to ``level`` with round-to-nearest-even.

    Returns a numpy array/scalar of the level's dtype, or a :class:`DDArray`
    for Extended.  Overflow saturates to signed infinity.
    """
    if level.name is Format.EXTENDED:
        if isinstance(x, DDArray):
            return x
        return dd(x)
    if isinstance(x, DDArray):
        with np.errstate(over="ignore"):
            return _dd_to_numpy(x, level.dtype)
    if isinstance(x, Fraction) or (isinstance(x, Integral) and abs(int(x)) > 2**53):
        x = dd(x)
        with np.errstate(over="ignore"):
            return _dd_to_numpy(x, level.dtype)[()]
    arr = np.asarray(x)
    if arr.dtype == object:
        return to_level(dd(arr), level)
    if np.iscomplexobj(arr):
        if level.name not in _COMPLEX:
            raise TypeError(f"complex values are not supported at {level}")
        return arr.astype(_COMPLEX[level.name])
    with np.errstate(over="ignore"):
        out = arr.astype(level.dtype)
    return out if arr.ndim else out[()]


def _neighbours(r: np.ndarray, x: np.ndarray, dtype):
    above = x > r.astype(np.float64)
    inf = np.asarray(np.inf, dtype=dtype)
    lo = np.where(above, r, np.nextafter(r, -inf))
    hi = np.where(above, np.nextafter(r, inf), r)
    return lo, hi


def round_to(x, level: PrecisionLevel, mode: RoundingMode = NEAREST_EVEN):
    """Round real ``x`` into ``level``.

    ``mode`` may be nearest-even or stochastic; the stochastic choice picks
    the upper neighbour with probability equal to the relative distance
    from the lower one, using a generator seeded from ``mode.seed``.
    """
    if mode.kind == "nearest":
        return to_level(x, level)
    if level.name is Format.EXTENDED or level.name is Format.DOUBLE:
        # float64 inputs are already representable; nothing to randomise
        return to_level(x, level)
    xf = np.asarray(x, dtype=np.float64)
    dtype = level.dtype
    with np.errstate(over="ignore"):
        r = xf.astype(dtype)
    exact = r.astype(np.float64) == xf
    lo, hi = _neighbours(r, xf, dtype)
    lof, hif = lo.astype(np.float64), hi.astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_up = np.where(exact | ~np.isfinite(hif - lof), 0.0, (xf - lof) / (hif - lof))
    u = np.random.default_rng(mode.seed).random(xf.shape)
    out = np.where(exact, r, np.where(u < p_up, hi, lo)).astype(dtype)
    return out if xf.ndim else out[()]


def is_finite(x) -> bool:
    if isinstance(x, DDArray):
        return bool(np.all(x.isfinite()))
    return bool(np.all(np.isfinite(x)))


def check_finite(x, level: PrecisionLevel, what: str = "value"):
    if not is_finite(x):
        raise RangeFault(f"{what} overflowed the range of {level}")
    return x


def eval_low(f, y, level: PrecisionLevel):
    """Evaluate ``f(y)`` with ``y`` and every intermediate rounded to ``level``.

    ``f`` must be written with elementwise arithmetic so that numpy (or the
    double-double type) keeps results in the operand format.
    """
    yl = to_level(y, level)
    with np.errstate(over="ignore", invalid="ignore"):
        out = to_level(f(yl), level)
    return check_finite(out, level, "function value")


def max_abs(x) -> float:
    """Infinity norm as a float64 number."""
    if isinstance(x, DDArray):
        return float(np.max(np.abs(x.hi))) if x.size else 0.0
    a = np.asarray(x)
    return float(np.max(np.abs(a))) if a.size else 0.0


def as_float64(x) -> np.ndarray:
    if isinstance(x, DDArray):
        return x.to_float()
    return np.asarray(x).astype(np.complex128 if np.iscomplexobj(x) else np.float64)


def zeros(shape, like):
    """Zero array in the same precision as ``like``."""
    if isinstance(like, DDArray):
        return DDArray.zeros(shape)
    return np.zeros(shape, dtype=np.asarray(like).dtype)


def eye(n: int, like):
    if isinstance(like, DDArray):
        return DDArray(np.eye(n))
    return np.eye(n, dtype=np.asarray(like).dtype)


def constant(value, like):
    """``value`` (float, int or Fraction) rounded once into the precision of ``like``."""
    return to_level(value, level_of(like))
