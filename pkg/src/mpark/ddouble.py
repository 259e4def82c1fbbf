"""Vectorised double-double arithmetic.

A :class:`DDArray` stores each value as an unevaluated sum ``hi + lo`` of two
float64 numbers with ``|lo| <= ulp(hi)/2``, giving roughly 104-106 bits of
significand.  The elementary kernels are compiled with numba; operands broadcast like
numpy arrays.

Algorithms follow the classic error-free transformations (Dekker, Knuth);
addition uses the accurate (IEEE-style) variant, not the sloppy one.
"""
from __future__ import annotations

from fractions import Fraction
from numbers import Integral, Real

import numpy as np
from numba import njit

_SPLITTER = 134217729.0  # 2**27 + 1


@njit(inline="always")
def _two_prod_err(a, b, p):
    t = _SPLITTER * a
    a1 = t - (t - a)
    a2 = a - a1
    t = _SPLITTER * b
    b1 = t - (t - b)
    b2 = b - b1
    return ((a1 * b1 - p) + a1 * b2 + a2 * b1) + a2 * b2


@njit(inline="always")
def _add(ah, al, bh, bl):
    s = ah + bh
    bb = s - ah
    e = (ah - (s - bb)) + (bh - bb)
    t = al + bl
    bb = t - al
    f = (al - (t - bb)) + (bl - bb)
    e += t
    h = s + e
    e = e - (h - s)
    e += f
    s = h + e
    return s, e - (s - h)


@njit(inline="always")
def _mul(ah, al, bh, bl):
    p = ah * bh
    e = _two_prod_err(ah, bh, p) + (ah * bl + al * bh)
    h = p + e
    return h, e - (h - p)


@njit(inline="always")
def _div(ah, al, bh, bl):
    q1 = ah / bh
    # remainder a - q1*b from an exact two-product of q1*bh
    p = q1 * bh
    pe = _two_prod_err(q1, bh, p) + q1 * bl
    r = ah - p
    bb = r - ah
    re = (ah - (r - bb)) + (-p - bb) + (al - pe)
    q2 = (r + re) / bh
    q = q1 + q2
    return q, q2 - (q - q1)


# Flat operands; a length-1 operand broadcasts against the other.  Three
# explicit kernels rather than a factory: numba re-loads closure variables
# on every call, which dominated the cost of small operands.
@njit(cache=True)
def _dd_add(ah, al, bh, bl):
    na, nb = ah.size, bh.size
    n = max(na, nb)
    oh = np.empty(n)
    ol = np.empty(n)
    for i in range(n):
        ia = i if na > 1 else 0
        ib = i if nb > 1 else 0
        oh[i], ol[i] = _add(ah[ia], al[ia], bh[ib], bl[ib])
    return oh, ol


@njit(cache=True)
def _dd_mul(ah, al, bh, bl):
    na, nb = ah.size, bh.size
    n = max(na, nb)
    oh = np.empty(n)
    ol = np.empty(n)
    for i in range(n):
        ia = i if na > 1 else 0
        ib = i if nb > 1 else 0
        oh[i], ol[i] = _mul(ah[ia], al[ia], bh[ib], bl[ib])
    return oh, ol


@njit(cache=True)
def _dd_div(ah, al, bh, bl):
    na, nb = ah.size, bh.size
    n = max(na, nb)
    oh = np.empty(n)
    ol = np.empty(n)
    for i in range(n):
        ia = i if na > 1 else 0
        ib = i if nb > 1 else 0
        oh[i], ol[i] = _div(ah[ia], al[ia], bh[ib], bl[ib])
    return oh, ol


def _apply(kernel, a: "DDArray", b: "DDArray") -> "DDArray":
    ah, bh = a.hi, b.hi
    if ah.ndim == 1 and (bh.ndim == 1 and (bh.size == ah.size or bh.size == 1)):
        oh, ol = kernel(ah, a.lo, bh, b.lo)
        return DDArray._new(oh, ol)
    if ah.shape == bh.shape or bh.size == 1:
        shape = ah.shape if ah.size >= bh.size else bh.shape
        al, bl = a.lo, b.lo
    elif ah.size == 1:
        shape = bh.shape
        al, bl = a.lo, b.lo
    else:
        ah, al, bh, bl = np.broadcast_arrays(ah, a.lo, bh, b.lo)
        shape = ah.shape
    oh, ol = kernel(ah.ravel(), al.ravel(), bh.ravel(), bl.ravel())
    return DDArray._new(oh.reshape(shape), ol.reshape(shape))


def _split_fraction(x: Fraction) -> tuple[float, float]:
    hi = float(x)
    lo = float(x - Fraction(hi))
    return hi, lo


class DDArray:
    """Array of double-double numbers with numpy-like indexing and arithmetic."""

    __slots__ = ("hi", "lo")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, hi, lo=None):
        self.hi = np.asarray(hi, dtype=np.float64)
        self.lo = np.zeros_like(self.hi) if lo is None else np.asarray(lo, dtype=np.float64)

    @classmethod
    def _new(cls, hi: np.ndarray, lo: np.ndarray) -> "DDArray":
        obj = object.__new__(cls)
        obj.hi = hi
        obj.lo = lo
        return obj

    # -- construction -----------------------------------------------------
    @classmethod
    def coerce(cls, x) -> "DDArray":
        if isinstance(x, DDArray):
            return x
        if isinstance(x, (int, float)) and not isinstance(x, bool) and abs(x) < 2**53:
            return cls._new(np.array(float(x)), np.zeros(()))
        if isinstance(x, Fraction):
            return cls(*_split_fraction(x))
        if isinstance(x, Integral) and not isinstance(x, (bool, np.bool_)):
            return cls(*_split_fraction(Fraction(int(x))))
        arr = np.asarray(x)
        if arr.dtype == object:
            flat = [_split_fraction(Fraction(v)) for v in arr.ravel()]
            hi = np.array([p[0] for p in flat]).reshape(arr.shape)
            lo = np.array([p[1] for p in flat]).reshape(arr.shape)
            return cls(hi, lo)
        if np.iscomplexobj(arr):
            raise TypeError("double-double arrays are real-valued")
        return cls(arr.astype(np.float64))

    @classmethod
    def zeros(cls, shape) -> "DDArray":
        return cls(np.zeros(shape))

    # -- array protocol-ish ----------------------------------------------
    @property
    def shape(self):
        return self.hi.shape

    @property
    def ndim(self):
        return self.hi.ndim

    @property
    def size(self):
        return self.hi.size

    def __len__(self):
        return len(self.hi)

    def __getitem__(self, idx):
        return DDArray._new(np.asarray(self.hi[idx]), np.asarray(self.lo[idx]))

    def __setitem__(self, idx, value):
        v = DDArray.coerce(value)
        hi, lo = v.hi, v.lo
        if hi.size == 1 and np.ndim(self.hi[idx]) == 0:
            hi, lo = hi.reshape(()), lo.reshape(())
        self.hi[idx] = hi
        self.lo[idx] = lo

    def copy(self) -> "DDArray":
        return DDArray(self.hi.copy(), self.lo.copy())

    def reshape(self, *shape) -> "DDArray":
        return DDArray(self.hi.reshape(*shape), self.lo.reshape(*shape))

    def to_float(self) -> np.ndarray:
        """Nearest float64 values (``hi`` of a normalised pair)."""
        return self.hi + self.lo

    def to_fractions(self) -> np.ndarray:
        out = np.empty(self.shape, dtype=object)
        for i, (h, l) in enumerate(zip(self.hi.ravel(), self.lo.ravel())):
            out.flat[i] = Fraction(h) + Fraction(l)
        return out

    def isfinite(self) -> np.ndarray:
        return np.isfinite(self.hi) & np.isfinite(self.lo)

    def __repr__(self):
        return f"DDArray(hi={self.hi!r}, lo={self.lo!r})"

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        o = DDArray.coerce(other)
        return _apply(_dd_add, self, o)

    __radd__ = __add__

    def __sub__(self, other):
        o = DDArray.coerce(other)
        return _apply(_dd_add, self, -o)

    def __rsub__(self, other):
        o = DDArray.coerce(other)
        return _apply(_dd_add, o, -self)

    def __mul__(self, other):
        o = DDArray.coerce(other)
        return _apply(_dd_mul, self, o)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = DDArray.coerce(other)
        return _apply(_dd_div, self, o)

    def __rtruediv__(self, other):
        o = DDArray.coerce(other)
        return _apply(_dd_div, o, self)

    def __neg__(self):
        return DDArray._new(-self.hi, -self.lo)

    def __abs__(self):
        sign = np.where(self.hi < 0, -1.0, 1.0)
        return DDArray(self.hi * sign, self.lo * sign)

    def __iadd__(self, other):
        return self.__add__(other)

    def __isub__(self, other):
        return self.__sub__(other)


def dd(x) -> DDArray:
    """Convert ``x`` (floats, ints, Fractions, arrays of those) to double-double."""
    return DDArray.coerce(x)


def is_real(x) -> bool:
    return isinstance(x, (Real, Fraction))
