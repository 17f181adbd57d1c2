"""Exact rational helpers.

Everything that feeds the oracle is an ``mpq``. Decimal strings are parsed
exactly, floats are converted through their shortest decimal repr so that
``0.1`` becomes ``1/10`` and not the binary neighbour.
"""
from decimal import Decimal
from fractions import Fraction
from numbers import Integral, Rational

from gmpy2 import mpq, mpz

Q = type(mpq(0))
ZERO = mpq(0)
ONE = mpq(1)


def to_q(value) -> Q:
    if isinstance(value, Q):
        return value
    if isinstance(value, bool):
        return mpq(int(value))
    if isinstance(value, (Integral, type(mpz(0)))):
        return mpq(int(value))
    if isinstance(value, Rational):
        return mpq(value.numerator, value.denominator)
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError(f"non-finite value {value!r}")
        return _from_decimal(Decimal(repr(float(value))))
    if isinstance(value, Decimal):
        return _from_decimal(value)
    if isinstance(value, str):
        s = value.strip()
        if "/" in s:
            num, den = s.split("/", 1)
            return mpq(int(num), int(den))
        return _from_decimal(Decimal(s))
    raise TypeError(f"cannot convert {type(value).__name__} to a rational")


def _from_decimal(d: Decimal) -> Q:
    if not d.is_finite():
        raise ValueError(f"non-finite value {d}")
    num, den = d.as_integer_ratio()
    return mpq(num, den)


def floor_q(x: Q) -> Q:
    return mpq(x.numerator // x.denominator)


def ceil_q(x: Q) -> Q:
    return mpq(-((-x.numerator) // x.denominator))


def is_integral(x: Q) -> bool:
    return x.denominator == 1


def to_decimal_str(x, digits: int = 30) -> str:
    """Decimal text for ``x``; exact whenever the expansion terminates."""
    x = to_q(x)
    num, den = int(x.numerator), int(x.denominator)
    rest = den
    twos = fives = 0
    while rest % 2 == 0:
        rest //= 2
        twos += 1
    while rest % 5 == 0:
        rest //= 5
        fives += 1
    if rest == 1:
        scale = max(twos, fives)
        scaled = num * (10**scale // den)
    else:
        scale = digits
        scaled = round(Fraction(num * 10**scale, den))
    sign = "-" if scaled < 0 else ""
    text = str(abs(scaled)).rjust(scale + 1, "0")
    if scale:
        whole, frac = text[:-scale], text[-scale:].rstrip("0")
        return f"{sign}{whole}.{frac}" if frac else f"{sign}{whole}"
    return sign + text


def to_json_number(x):
    """Plain int for integral values, decimal string otherwise."""
    x = to_q(x)
    if is_integral(x):
        return int(x.numerator)
    return to_decimal_str(x)
