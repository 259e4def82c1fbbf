"""Independent reference implementations used only by the tests."""
from fractions import Fraction


def round_half_even(x: Fraction, bits: int, emin: int, emax: int) -> Fraction | float:
    """Round an exact rational to a binary format with ``bits`` significand bits.

    Subnormals below ``2**emin`` keep a fixed quantum; overflow returns +-inf.
    """
    if x == 0:
        return Fraction(0)
    sign = -1 if x < 0 else 1
    a = abs(x)
    e = a.numerator.bit_length() - a.denominator.bit_length()
    if Fraction(2) ** e > a:
        e -= 1
    e = max(e, emin)
    quantum = Fraction(2) ** (e - bits + 1)
    q, r = divmod(a, quantum)
    q = int(q)
    half = quantum / 2
    if r > half or (r == half and q % 2 == 1):
        q += 1
    out = q * quantum
    largest = (2 - Fraction(2) ** (1 - bits)) * Fraction(2) ** emax
    if out > largest:
        return sign * float("inf")
    return sign * out


def dahlquist_phi(A, b, z):
    """``1 + z b (I - zA)^-1 e`` by forward substitution (A lower triangular)."""
    s = len(b)
    y = []
    for i in range(s):
        acc = 1 + z * sum(A[i][j] * y[j] for j in range(i))
        y.append(acc / (1 - z * A[i][i]))
    return 1 + z * sum(b[j] * y[j] for j in range(s))
