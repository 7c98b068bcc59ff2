"""p-precision floats.

A float is a pair ``<m, e>`` of signed integers denoting ``m * 2**(e - |m| + 1)``
where ``|m|`` is the bit-length of ``|m|``.  Every arithmetic operation is
computed exactly and rounded once to the nearest representable float (ties to
an even mantissa), so iterated sums do not depend on summation order.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Sequence

import mpmath

__all__ = [
    "PrecisionSpec", "PFloat", "Dyadic", "InvalidSimplex",
    "value_of", "round_nearest", "round_fraction", "round_real", "min_positive",
    "smallest_normal", "max_value", "arith", "sum_iter", "approx_simplex",
    "exp_p", "relu", "encode", "decode", "all_floats", "next_up", "next_down",
    "parse_literal", "format_literal",
]


class InvalidSimplex(ValueError):
    pass


@dataclass(frozen=True)
class PrecisionSpec:
    p_m: int
    p_e: int

    def __post_init__(self):
        if self.p_m < 2 or self.p_e < 1:
            raise ValueError(f"need p_m >= 2 and p_e >= 1, got {self.p_m}, {self.p_e}")

    @property
    def p(self) -> int:
        return self.p_m + self.p_e

    @property
    def exp_min(self) -> int:
        return -(1 << (self.p_e - 1))

    @property
    def exp_max(self) -> int:
        return (1 << (self.p_e - 1)) - 1

    @property
    def mant_bits(self) -> int:
        """Magnitude bits of a normalized mantissa."""
        return self.p_m - 1


@dataclass(frozen=True, order=False)
class Dyadic:
    """Exact value ``significand * 2**shift``; canonical with odd significand."""

    significand: int
    shift: int = 0

    def __post_init__(self):
        s, t = self.significand, self.shift
        if s == 0:
            t = 0
        else:
            tz = (s & -s).bit_length() - 1
            s >>= tz
            t += tz
        object.__setattr__(self, "significand", s)
        object.__setattr__(self, "shift", t)

    @classmethod
    def from_fraction(cls, x) -> "Dyadic":
        x = Fraction(x)
        den = x.denominator
        if den & (den - 1):
            raise ValueError(f"{x} is not dyadic")
        return cls(x.numerator, -(den.bit_length() - 1))

    def to_fraction(self) -> Fraction:
        if self.shift >= 0:
            return Fraction(self.significand << self.shift)
        return Fraction(self.significand, 1 << -self.shift)

    def __add__(self, other):
        return Dyadic.from_fraction(self.to_fraction() + _frac(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Dyadic.from_fraction(self.to_fraction() - _frac(other))

    def __neg__(self):
        return Dyadic(-self.significand, self.shift)

    def __mul__(self, other):
        o = other if isinstance(other, Dyadic) else Dyadic.from_fraction(other)
        return Dyadic(self.significand * o.significand, self.shift + o.shift)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, Dyadic):
            return self.significand == other.significand and self.shift == other.shift
        if isinstance(other, (int, Fraction)):
            return self.to_fraction() == other
        return NotImplemented

    def __hash__(self):
        return hash(self.to_fraction())

    def __lt__(self, other):
        return self.to_fraction() < _frac(other)

    def __le__(self, other):
        return self.to_fraction() <= _frac(other)

    def __gt__(self, other):
        return self.to_fraction() > _frac(other)

    def __ge__(self, other):
        return self.to_fraction() >= _frac(other)

    def __float__(self):
        return math.ldexp(self.significand, self.shift)

    def __repr__(self):
        return f"Dyadic({self.significand}, {self.shift})"


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, Dyadic):
        return x.to_fraction()
    if isinstance(x, PFloat):
        return x.fraction
    return Fraction(x)


@dataclass(frozen=True)
class PFloat:
    mantissa: int
    exponent: int
    spec: PrecisionSpec

    def __post_init__(self):
        m, e, s = self.mantissa, self.exponent, self.spec
        if m == 0:
            if e != 0:
                raise ValueError("zero must be encoded as <0, 0>")
            return
        if abs(m).bit_length() != s.mant_bits:
            raise ValueError(f"mantissa {m} is not normalized to {s.mant_bits} bits")
        if not s.exp_min <= e <= s.exp_max:
            raise ValueError(f"exponent {e} outside [{s.exp_min}, {s.exp_max}]")

    @cached_property
    def fraction(self) -> Fraction:
        m = self.mantissa
        if m == 0:
            return Fraction(0)
        t = self.exponent - abs(m).bit_length() + 1
        return Fraction(m << t) if t >= 0 else Fraction(m, 1 << -t)

    @property
    def is_zero(self) -> bool:
        return self.mantissa == 0

    def __neg__(self):
        return PFloat(-self.mantissa, self.exponent, self.spec)

    def __float__(self):
        return float(self.fraction)

    def __repr__(self):
        return format_literal(self)


def value_of(f: PFloat) -> Dyadic:
    m = f.mantissa
    return Dyadic(m, f.exponent - abs(m).bit_length() + 1) if m else Dyadic(0)


def min_positive(spec: PrecisionSpec) -> Dyadic:
    """``2**-(p_m - 2 + 2**(p_e - 1))``, the finite-precision attention threshold.

    This is a lower bound on the smallest positive float; it is attained when
    ``p_m == 2``.  See :func:`smallest_normal` for the actual minimum.
    """
    return Dyadic(1, -(spec.p_m - 2 + (1 << (spec.p_e - 1))))


def smallest_normal(spec: PrecisionSpec) -> Dyadic:
    return Dyadic(1, spec.exp_min)


def max_value(spec: PrecisionSpec) -> PFloat:
    return PFloat((1 << spec.mant_bits) - 1, spec.exp_max, spec)


def _zero(spec):
    return PFloat(0, 0, spec)


def _floor_log2(a: Fraction) -> int:
    e = a.numerator.bit_length() - a.denominator.bit_length()
    # a in [2**(e-1), 2**(e+1))
    if e >= 0:
        if a.numerator < a.denominator << e:
            e -= 1
    elif a.numerator << -e < a.denominator:
        e -= 1
    return e


def round_fraction(x, spec: PrecisionSpec) -> PFloat:
    """Nearest float to the rational ``x`` (ties to even, saturating)."""
    x = Fraction(x)
    if x == 0:
        return _zero(spec)
    sign = 1 if x > 0 else -1
    a = abs(x)
    q = spec.mant_bits
    e = _floor_log2(a)
    if e < spec.exp_min:
        # only 0 and the smallest normal are nearby; the tie goes to zero
        if a <= Fraction(2) ** (spec.exp_min - 1):
            return _zero(spec)
        return PFloat(sign << (q - 1), spec.exp_min, spec)
    if e > spec.exp_max:
        return PFloat(sign * ((1 << q) - 1), spec.exp_max, spec)
    m = round(a / Fraction(2) ** (e - q + 1))
    if m == 1 << q:
        m >>= 1
        e += 1
        if e > spec.exp_max:
            return PFloat(sign * ((1 << q) - 1), spec.exp_max, spec)
    return PFloat(sign * m, e, spec)


def round_nearest(x: Dyadic, spec: PrecisionSpec) -> PFloat:
    return round_fraction(_frac(x), spec)


def next_up(f: PFloat) -> PFloat | None:
    """Next representable float above ``f``; None at the maximum."""
    s = f.spec
    q = s.mant_bits
    if f.is_zero:
        return PFloat(1 << (q - 1), s.exp_min, s)
    if f.mantissa < 0:
        d = next_down(-f)
        return None if d is None else -d
    m, e = f.mantissa + 1, f.exponent
    if m == 1 << q:
        m, e = 1 << (q - 1), e + 1
        if e > s.exp_max:
            return None
    return PFloat(m, e, s)


def next_down(f: PFloat) -> PFloat | None:
    s = f.spec
    q = s.mant_bits
    if f.is_zero:
        return PFloat(-(1 << (q - 1)), s.exp_min, s)
    if f.mantissa < 0:
        u = next_up(-f)
        return None if u is None else -u
    m, e = f.mantissa - 1, f.exponent
    if m < 1 << (q - 1):
        if e == s.exp_min:
            return _zero(s)
        m, e = (1 << q) - 1, e - 1
    return PFloat(m, e, s)


def _preferred(a: PFloat, b: PFloat) -> bool:
    """Tie-break: does ``a`` win over ``b``?"""
    if a.is_zero:
        return True
    if b.is_zero:
        return False
    return a.mantissa % 2 == 0


def round_real(sign: Callable[[Fraction], int], approx, spec: PrecisionSpec) -> PFloat:
    """Round a real number known only through ``sign(t) = sgn(x - t)``.

    ``approx`` is any rational near ``x``; the search walks to the float whose
    rounding interval contains ``x`` using exact midpoint comparisons.
    """
    f = round_fraction(approx, spec)
    while True:
        up = next_up(f)
        if up is not None:
            s = sign((f.fraction + up.fraction) / 2)
            if s > 0 or (s == 0 and _preferred(up, f)):
                f = up
                continue
        down = next_down(f)
        if down is not None:
            s = sign((f.fraction + down.fraction) / 2)
            if s < 0 or (s == 0 and _preferred(down, f)):
                f = down
                continue
        return f


def _truncate_sticky(x: Fraction, bits: int) -> Fraction:
    # keep `bits` significant bits and force the last one on when anything was dropped
    if x == 0:
        return x
    sign = 1 if x > 0 else -1
    a = abs(x)
    scale = Fraction(2) ** (bits - 1 - _floor_log2(a))
    scaled = a * scale
    t = math.floor(scaled)
    if t != scaled:
        t |= 1
    return sign * t / scale


def arith(op: str, a: PFloat, b: PFloat) -> PFloat:
    if a.spec != b.spec:
        raise ValueError("operands have different precision")
    spec = a.spec
    if op == "add":
        return round_fraction(a.fraction + b.fraction, spec)
    if op == "mul":
        return round_fraction(a.fraction * b.fraction, spec)
    if op == "div":
        if b.is_zero:
            raise ZeroDivisionError("p-float division by zero")
        q = _truncate_sticky(a.fraction / b.fraction, spec.p_m + 2)
        return round_fraction(q, spec)
    raise ValueError(f"unknown op {op!r}")


def sum_iter(xs: Iterable[PFloat], spec: PrecisionSpec | None = None) -> PFloat:
    xs = list(xs)
    if spec is None:
        if not xs:
            raise ValueError("empty sum needs an explicit spec")
        spec = xs[0].spec
    if any(x.spec != spec for x in xs):
        raise ValueError("mixed precisions in sum")
    return round_fraction(sum((x.fraction for x in xs), Fraction(0)), spec)


def approx_simplex(a: Sequence, spec: PrecisionSpec) -> tuple[list[PFloat], int]:
    vals = [_frac(x) for x in a]
    counts = Counter(vals)
    if any(v < 0 for v in counts) or sum((v * c for v, c in counts.items()), Fraction(0)) != 1:
        raise InvalidSimplex("entries must be nonnegative and sum to exactly 1")
    rounded = {v: round_fraction(v, spec) for v in counts}
    out = [rounded[v] for v in vals]
    return out, sum(not f.is_zero for f in out)


def relu(x: PFloat) -> PFloat:
    return x if x.mantissa >= 0 else _zero(x.spec)


def _exp_sign(v: Fraction) -> Callable[[Fraction], int]:
    def sign(t: Fraction) -> int:
        if t <= 0:
            return 1
        if v == 0:
            return (1 > t) - (1 < t)
        ctx = mpmath.iv
        saved, prec = ctx.prec, 64
        try:
            while True:
                ctx.prec = prec
                iv = ctx.exp(ctx.mpf(v.numerator) / v.denominator)
                tt = ctx.mpf(t.numerator) / t.denominator
                if iv.a > tt.b:
                    return 1
                if iv.b < tt.a:
                    return -1
                prec *= 2  # exp of a nonzero rational is never rational
        finally:
            ctx.prec = saved
    return sign


def exp_p(x: PFloat) -> PFloat:
    """Correctly rounded ``exp`` of a float."""
    v = x.fraction
    spec = x.spec
    fv = float(v)
    if fv > 2 ** (spec.p_e + 2):
        approx = max_value(spec).fraction
    elif fv < -(2 ** (spec.p_e + 2)):
        approx = Fraction(0)
    else:
        approx = Fraction(math.exp(fv))
    return round_real(_exp_sign(v), approx, spec)


def all_floats(spec: PrecisionSpec) -> list[PFloat]:
    """Every canonical float, in increasing order."""
    q = spec.mant_bits
    pos = [PFloat(m, e, spec) for e in range(spec.exp_min, spec.exp_max + 1)
           for m in range(1 << (q - 1), 1 << q)]
    return [-f for f in reversed(pos)] + [_zero(spec)] + pos


# -- bit encoding -------------------------------------------------------------

def _twos(v: int, width: int) -> tuple[int, ...]:
    v &= (1 << width) - 1
    return tuple((v >> (width - 1 - k)) & 1 for k in range(width))


def _untwos(bits: Sequence[int]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | b
    if bits and bits[0]:
        v -= 1 << len(bits)
    return v


def encode(f: PFloat) -> tuple[int, ...]:
    """Mantissa then exponent, each two's complement, MSB first."""
    return _twos(f.mantissa, f.spec.p_m) + _twos(f.exponent, f.spec.p_e)


def decode(bits: Sequence[int], spec: PrecisionSpec) -> PFloat:
    """Decode any ``p``-bit pattern via the value formula.

    Patterns with an unnormalized mantissa still denote a representable value
    and decode to its canonical float.
    """
    if len(bits) != spec.p:
        raise ValueError(f"expected {spec.p} bits, got {len(bits)}")
    m = _untwos(bits[:spec.p_m])
    e = _untwos(bits[spec.p_m:])
    if m == 0:
        return _zero(spec)
    return round_fraction(Fraction(m) * Fraction(2) ** (e - abs(m).bit_length() + 1), spec)


# -- literal format -----------------------------------------------------------

_LITERAL_RE = re.compile(r"pf\(\s*(-?)([01]+)\s*,\s*(-?)([01]+)\s*;\s*pm\s*=\s*(\d+)\s*,\s*pe\s*=\s*(\d+)\s*\)")


def parse_literal(text: str) -> PFloat:
    """Parse ``pf(<mantissa-bits>,<exponent-bits>;pm=<int>,pe=<int>)``."""
    mt = _LITERAL_RE.fullmatch(text.strip())
    if not mt:
        raise ValueError(f"bad float literal {text!r}")
    ms, mb, es, eb, pm, pe = mt.groups()
    m = int(mb, 2) * (-1 if ms else 1)
    e = int(eb, 2) * (-1 if es else 1)
    return PFloat(m, e, PrecisionSpec(int(pm), int(pe)))


def format_literal(f: PFloat) -> str:
    s = f.spec
    mb = format(abs(f.mantissa), f"0{s.mant_bits}b")
    eb = format(abs(f.exponent), f"0{s.p_e}b")
    return (f"pf({'-' if f.mantissa < 0 else ''}{mb},{'-' if f.exponent < 0 else ''}{eb};"
            f"pm={s.p_m},pe={s.p_e})")
