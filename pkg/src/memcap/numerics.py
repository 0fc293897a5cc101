"""Exact scalar arithmetic: dyadic numbers, rationals, certified reals.

Every network weight in this package is a :class:`Dyadic` (num / 2**exp).
Rationals appear only where an exact 1/n average is unavoidable; they are
plain ``fractions.Fraction`` values.  Irrational bound expressions (multiples
of pi, square roots) are handled as :class:`CertifiedReal` interval
enclosures whose endpoints are exact rationals, refined on demand via MPFR
directed rounding.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from fractions import Fraction

import gmpy2

from .errors import PrecisionExhausted, RangeError

BigRational = Fraction

# Certified-ceiling refinement doubles the working precision until the cap.
DEFAULT_PRECISION_CAP = 4096
_PRECISION_ENV = "MEMCAP_PRECISION_CAP"


def precision_cap() -> int:
    raw = os.environ.get(_PRECISION_ENV)
    if raw is None:
        return DEFAULT_PRECISION_CAP
    cap = int(raw)
    if cap < 8:
        raise RangeError(f"{_PRECISION_ENV} must be at least 8, got {cap}")
    return cap


# ---------------------------------------------------------------------------
# bit-string primitives
# ---------------------------------------------------------------------------

def bit_len(x: int) -> int:
    """Number of bits in the binary representation of x >= 0; LEN(0) = 1."""
    if x < 0:
        raise RangeError(f"bit_len requires a nonnegative integer, got {x}")
    return x.bit_length() if x else 1


def bin_slice(x: int, i: int, j: int, total_bits: int) -> int:
    """Bits i..j of x (1-indexed from the most significant of total_bits)."""
    if not (1 <= i <= j <= total_bits):
        raise RangeError(f"invalid bit slice [{i}:{j}] of width {total_bits}")
    if x < 0 or x >= (1 << total_bits):
        raise RangeError(f"{x} does not fit in {total_bits} bits")
    return (x >> (total_bits - j)) & ((1 << (j - i + 1)) - 1)


# ---------------------------------------------------------------------------
# dyadic scalars
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dyadic:
    """num / 2**exp in canonical form (exp == 0 or num odd)."""

    num: int
    exp: int = 0

    def __post_init__(self):
        num, exp = self.num, self.exp
        if exp < 0:
            num <<= -exp
            exp = 0
        if num == 0:
            exp = 0
        elif exp:
            shift = min(exp, (num & -num).bit_length() - 1)
            if shift:
                num >>= shift
                exp -= shift
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "exp", exp)

    @staticmethod
    def from_int(n: int) -> "Dyadic":
        return Dyadic(n, 0)

    @staticmethod
    def from_fraction(q: Fraction) -> "Dyadic":
        den = q.denominator
        if den & (den - 1):
            raise RangeError(f"{q} is not dyadic (denominator {den})")
        return Dyadic(q.numerator, den.bit_length() - 1)

    @staticmethod
    def parse_decimal(text: str) -> "Dyadic":
        """Parse a decimal literal exactly; reject values like 0.1."""
        try:
            q = Fraction(text.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise RangeError(f"cannot parse {text!r} as a number") from exc
        return Dyadic.from_fraction(q)

    def as_fraction(self) -> Fraction:
        return Fraction(self.num, 1 << self.exp)

    def bit_complexity(self) -> int:
        return bit_len(abs(self.num)) + bit_len(self.exp)

    def is_zero(self) -> bool:
        return self.num == 0

    def __add__(self, other: "Dyadic") -> "Dyadic":
        e = max(self.exp, other.exp)
        return Dyadic((self.num << (e - self.exp)) + (other.num << (e - other.exp)), e)

    def __sub__(self, other: "Dyadic") -> "Dyadic":
        e = max(self.exp, other.exp)
        return Dyadic((self.num << (e - self.exp)) - (other.num << (e - other.exp)), e)

    def __mul__(self, other: "Dyadic") -> "Dyadic":
        return Dyadic(self.num * other.num, self.exp + other.exp)

    def __neg__(self) -> "Dyadic":
        return Dyadic(-self.num, self.exp)

    def _cmp_key(self, other: "Dyadic") -> tuple[int, int]:
        e = max(self.exp, other.exp)
        return self.num << (e - self.exp), other.num << (e - other.exp)

    def __lt__(self, other: "Dyadic") -> bool:
        a, b = self._cmp_key(other)
        return a < b

    def __le__(self, other: "Dyadic") -> bool:
        a, b = self._cmp_key(other)
        return a <= b

    def relu(self) -> "Dyadic":
        return self if self.num > 0 else ZERO

    def floor(self) -> int:
        return self.num >> self.exp

    def to_json(self) -> dict:
        return {"num": str(self.num), "exp": self.exp}

    @staticmethod
    def from_json(obj: dict) -> "Dyadic":
        return Dyadic(int(obj["num"]), int(obj["exp"]))

    def __repr__(self) -> str:
        return f"Dyadic({self.num}, {self.exp})"

    def __str__(self) -> str:
        if self.exp == 0:
            return str(self.num)
        return f"{self.num}/2^{self.exp}"


ZERO = Dyadic(0)
ONE = Dyadic(1)


def relu(x: Dyadic) -> Dyadic:
    return x.relu()


def rational_to_json(q: Fraction) -> dict:
    return {"p": str(q.numerator), "q": str(q.denominator)}


def rational_from_json(obj: dict) -> Fraction:
    return Fraction(int(obj["p"]), int(obj["q"]))


# ---------------------------------------------------------------------------
# certified reals
# ---------------------------------------------------------------------------

def _mpfr_to_fraction(x) -> Fraction:
    m, e = x.as_mantissa_exp()
    m, e = int(m), int(e)
    if e >= 0:
        return Fraction(m << e, 1)
    return Fraction(m, 1 << -e)


class _Indeterminate(Exception):
    """Interval too wide to evaluate (division straddling zero, log of <=0)."""


@dataclass(frozen=True)
class CertifiedReal:
    """Expression with exact rational interval enclosures of its value.

    Pure-rational subtrees fold to constants at construction time, so exact
    values never pay the interval machinery.  pi, sqrt and log2 are the only
    sources of approximation; their endpoints come from MPFR with directed
    rounding and are therefore true dyadic bounds.
    """

    op: str                      # const | pi | add | sub | mul | div | sqrt | log2
    args: tuple = ()
    const: Fraction | None = None

    # -- constructors -------------------------------------------------------

    @staticmethod
    def of(value) -> "CertifiedReal":
        if isinstance(value, CertifiedReal):
            return value
        if isinstance(value, Dyadic):
            return CertifiedReal("const", (), value.as_fraction())
        if isinstance(value, (int, Fraction)):
            return CertifiedReal("const", (), Fraction(value))
        raise TypeError(f"cannot lift {value!r} into a CertifiedReal")

    @staticmethod
    def pi() -> "CertifiedReal":
        return _PI

    @staticmethod
    def sqrt(value) -> "CertifiedReal":
        x = CertifiedReal.of(value)
        if x.op == "const":
            if x.const < 0:
                raise RangeError(f"sqrt of negative value {x.const}")
            p, q = x.const.numerator, x.const.denominator
            rp, rq = math.isqrt(p), math.isqrt(q)
            if rp * rp == p and rq * rq == q:
                return CertifiedReal("const", (), Fraction(rp, rq))
        return CertifiedReal("sqrt", (x,))

    @staticmethod
    def log2(value) -> "CertifiedReal":
        x = CertifiedReal.of(value)
        if x.op == "const":
            if x.const <= 0:
                raise RangeError(f"log2 of nonpositive value {x.const}")
            p, q = x.const.numerator, x.const.denominator
            if q == 1 and p & (p - 1) == 0:
                return CertifiedReal("const", (), Fraction(p.bit_length() - 1))
        return CertifiedReal("log2", (x,))

    def is_rational(self) -> bool:
        return self.op == "const"

    # -- arithmetic ---------------------------------------------------------

    def _binary(self, other, op: str) -> "CertifiedReal":
        other = CertifiedReal.of(other)
        if self.op == "const" and other.op == "const":
            a, b = self.const, other.const
            if op == "add":
                return CertifiedReal("const", (), a + b)
            if op == "sub":
                return CertifiedReal("const", (), a - b)
            if op == "mul":
                return CertifiedReal("const", (), a * b)
            if b == 0:
                raise ZeroDivisionError("division of certified reals by exact zero")
            return CertifiedReal("const", (), a / b)
        return CertifiedReal(op, (self, other))

    def __add__(self, other):
        return self._binary(other, "add")

    def __radd__(self, other):
        return CertifiedReal.of(other)._binary(self, "add")

    def __sub__(self, other):
        return self._binary(other, "sub")

    def __rsub__(self, other):
        return CertifiedReal.of(other)._binary(self, "sub")

    def __mul__(self, other):
        return self._binary(other, "mul")

    def __rmul__(self, other):
        return CertifiedReal.of(other)._binary(self, "mul")

    def __truediv__(self, other):
        return self._binary(other, "div")

    def __rtruediv__(self, other):
        return CertifiedReal.of(other)._binary(self, "div")

    # -- interval evaluation --------------------------------------------------

    def enclosure(self, prec: int) -> tuple[Fraction, Fraction]:
        """Exact rational (lo, hi) with lo <= value <= hi at ~prec bits."""
        if self.op == "const":
            return self.const, self.const
        if self.op == "pi":
            return _pi_bounds(prec)
        if self.op in ("add", "sub", "mul", "div"):
            alo, ahi = self.args[0].enclosure(prec)
            blo, bhi = self.args[1].enclosure(prec)
            if self.op == "add":
                return alo + blo, ahi + bhi
            if self.op == "sub":
                return alo - bhi, ahi - blo
            if self.op == "mul":
                products = (alo * blo, alo * bhi, ahi * blo, ahi * bhi)
                return min(products), max(products)
            if blo <= 0 <= bhi:
                raise _Indeterminate("division by interval containing zero")
            quotients = (alo / blo, alo / bhi, ahi / blo, ahi / bhi)
            return min(quotients), max(quotients)
        lo, hi = self.args[0].enclosure(prec)
        if self.op == "sqrt":
            if hi < 0:
                raise RangeError("sqrt of a certified-negative value")
            lo = max(lo, Fraction(0))
            return _sqrt_down(lo, prec), _sqrt_up(hi, prec)
        if self.op == "log2":
            if lo <= 0:
                raise _Indeterminate("log2 of interval touching zero")
            return _log2_down(lo, prec), _log2_up(hi, prec)
        raise AssertionError(f"unknown op {self.op}")

    def decimal_bounds(self, digits: int = 30, prec: int = 192) -> tuple[str, str]:
        lo, hi = self.enclosure(prec)
        return _decimal_str(lo, digits), _decimal_str(hi, digits)

    def __float__(self) -> float:
        lo, hi = self.enclosure(96)
        return float((lo + hi) / 2)

    def __repr__(self) -> str:
        if self.op == "const":
            return f"CertifiedReal({self.const})"
        lo, hi = self.decimal_bounds(digits=8, prec=96)
        return f"CertifiedReal({self.op}, [{lo}, {hi}])"


_PI = CertifiedReal("pi")
PI = _PI


def _pi_bounds(prec: int) -> tuple[Fraction, Fraction]:
    with gmpy2.context(precision=prec, round=gmpy2.RoundDown):
        lo = gmpy2.const_pi()
    with gmpy2.context(precision=prec, round=gmpy2.RoundUp):
        hi = gmpy2.const_pi()
    return _mpfr_to_fraction(lo), _mpfr_to_fraction(hi)


def _to_mpq(q: Fraction):
    return gmpy2.mpq(q.numerator, q.denominator)


def _sqrt_down(q: Fraction, prec: int) -> Fraction:
    if q == 0:
        return Fraction(0)
    with gmpy2.context(precision=prec, round=gmpy2.RoundDown):
        return _mpfr_to_fraction(gmpy2.sqrt(gmpy2.mpfr(_to_mpq(q))))


def _sqrt_up(q: Fraction, prec: int) -> Fraction:
    if q == 0:
        return Fraction(0)
    with gmpy2.context(precision=prec, round=gmpy2.RoundUp):
        return _mpfr_to_fraction(gmpy2.sqrt(gmpy2.mpfr(_to_mpq(q))))


def _log2_down(q: Fraction, prec: int) -> Fraction:
    with gmpy2.context(precision=prec, round=gmpy2.RoundDown):
        return _mpfr_to_fraction(gmpy2.log2(gmpy2.mpfr(_to_mpq(q))))


def _log2_up(q: Fraction, prec: int) -> Fraction:
    with gmpy2.context(precision=prec, round=gmpy2.RoundUp):
        return _mpfr_to_fraction(gmpy2.log2(gmpy2.mpfr(_to_mpq(q))))


def _decimal_str(q: Fraction, digits: int) -> str:
    sign = "-" if q < 0 else ""
    q = abs(q)
    whole, rem = divmod(q.numerator, q.denominator)
    frac_digits = rem * 10**digits // q.denominator
    return f"{sign}{whole}.{str(frac_digits).zfill(digits)}"


# ---------------------------------------------------------------------------
# certified rounding and comparison
# ---------------------------------------------------------------------------

def _refine(expr: CertifiedReal, accept, cap: int | None, what: str):
    prec = 64
    cap = precision_cap() if cap is None else cap
    while True:
        try:
            lo, hi = expr.enclosure(prec)
        except _Indeterminate:
            lo = hi = None
        if lo is not None:
            result = accept(lo, hi)
            if result is not None:
                return result
        if prec >= cap:
            raise PrecisionExhausted(
                f"{what} unresolved at precision cap {cap} (interval [{lo}, {hi}])"
            )
        prec *= 2


def certified_ceil(expr: CertifiedReal, cap: int | None = None) -> int:
    """The unique integer ceil of the expression's true value."""
    expr = CertifiedReal.of(expr)
    if expr.is_rational():
        return math.ceil(expr.const)

    def accept(lo: Fraction, hi: Fraction):
        cl, ch = math.ceil(lo), math.ceil(hi)
        return cl if cl == ch else None

    return _refine(expr, accept, cap, "certified_ceil")


def certified_floor(expr: CertifiedReal, cap: int | None = None) -> int:
    expr = CertifiedReal.of(expr)
    if expr.is_rational():
        return math.floor(expr.const)

    def accept(lo: Fraction, hi: Fraction):
        fl, fh = math.floor(lo), math.floor(hi)
        return fl if fl == fh else None

    return _refine(expr, accept, cap, "certified_floor")


def certified_lt(value, expr, cap: int | None = None) -> bool:
    """Decide value < expr; requires the two to be provably unequal."""
    a, b = CertifiedReal.of(value), CertifiedReal.of(expr)
    if a.is_rational() and b.is_rational():
        return a.const < b.const

    def accept(lo: Fraction, hi: Fraction):
        if hi < 0:
            return False
        if lo > 0:
            return True
        return None

    return _refine(b - a, accept, cap, "certified_lt")


def certified_le(value, expr, cap: int | None = None) -> bool:
    """Decide value <= expr (exact when both sides fold to rationals)."""
    a, b = CertifiedReal.of(value), CertifiedReal.of(expr)
    if a.is_rational() and b.is_rational():
        return a.const <= b.const
    return certified_lt(a, b, cap)
