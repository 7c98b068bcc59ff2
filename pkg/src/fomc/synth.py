"""Circuit synthesis: DNF tables, symmetric functions, adders, iterated float sums.

Bit vectors are MSB first throughout, matching ``pfloat.encode``.  Row ``r``
of a truth table is the input whose bits spell ``r`` in binary.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .circuit import AND, GE, LE, NOT, OR, Circuit, CircuitBuilder
from .pfloat import PrecisionSpec, decode, encode, round_fraction

__all__ = [
    "TableTooLarge", "TruthTable", "DEFAULT_CAP", "synth_local", "synth_sparse",
    "synth_symmetric", "synth_adder", "synth_float_sum", "float_sum_layout",
    "int_to_bits", "bits_to_int",
]

DEFAULT_CAP = 22


class TableTooLarge(ValueError):
    pass


def int_to_bits(v: int, width: int) -> tuple[int, ...]:
    return tuple((v >> (width - 1 - t)) & 1 for t in range(width))


def bits_to_int(bits: Sequence[int]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


class TruthTable:
    """Outputs for all ``2**m`` inputs, as a ``(2**m, p)`` bit array."""

    def __init__(self, m: int, p: int, rows):
        rows = np.asarray(rows, dtype=np.uint8).reshape(-1, p) if p else np.zeros((1 << m, 0), np.uint8)
        if rows.shape != (1 << m, p):
            raise ValueError(f"expected {1 << m} rows of {p} bits, got shape {rows.shape}")
        self.m, self.p, self.rows = m, p, rows

    @classmethod
    def from_function(cls, m: int, p: int, f: Callable[[tuple], Sequence[int]],
                      cap: int = DEFAULT_CAP) -> "TruthTable":
        if m > cap:
            raise TableTooLarge(f"{m} input bits exceeds the cap of {cap}")
        rows = [tuple(f(int_to_bits(r, m))) for r in range(1 << m)]
        return cls(m, p, rows)

    def __call__(self, bits: Sequence[int]) -> np.ndarray:
        return self.rows[bits_to_int(bits)]


def _dnf(m: int, p: int, X: np.ndarray, Y: np.ndarray) -> Circuit:
    # one GE-m gate per listed row over literals, then an OR per output bit
    b = CircuitBuilder(m)
    neg = [b.add(NOT, [t]) for t in range(m)]
    terms = []
    for x, y in zip(X, Y):
        if y.any():
            lits = [t if x[t] else neg[t] for t in range(m)]
            terms.append((b.add(AND(m), lits), y))
    outs = []
    for q in range(p):
        outs.append(b.add(OR, [g for g, y in terms if y[q]]))
    return b.finish(outs)


def synth_local(t: TruthTable, cap: int = DEFAULT_CAP) -> Circuit:
    """Depth-3 DNF circuit for a full table; at most ``2**m + m + p`` non-input gates."""
    if t.m > cap:
        raise TableTooLarge(f"{t.m} input bits exceeds the cap of {cap}")
    X = ((np.arange(1 << t.m)[:, None] >> np.arange(t.m - 1, -1, -1)[None, :]) & 1).astype(np.uint8)
    return _dnf(t.m, t.p, X, t.rows)


def synth_sparse(m: int, p: int, rows: dict) -> Circuit:
    """DNF circuit exact on the listed inputs ``{input bits: output bits}``; other inputs give 0.

    Used when a component's input is too wide for a full table but its
    reachable inputs are few.
    """
    X = np.array([tuple(x) for x in rows], dtype=np.uint8).reshape(-1, m)
    Y = np.array([tuple(y) for y in rows.values()], dtype=np.uint8).reshape(-1, p)
    if X.shape[0] and (X.shape[1] != m or Y.shape[1] != p):
        raise ValueError("row widths do not match m and p")
    return _dnf(m, p, X, Y)


def _accept_bits(accept, c):
    v = accept(c)
    return (int(bool(v)),) if isinstance(v, (bool, int, np.integer)) else tuple(int(x) for x in v)


def synth_symmetric(n_in: int, accept: Callable[[int], Sequence[int]]) -> Circuit:
    """Circuit whose outputs are ``accept(popcount(x))``, built from exactly-c detectors."""
    table = [_accept_bits(accept, c) for c in range(n_in + 1)]
    p = len(table[0])
    b = CircuitBuilder(n_in)
    ins = list(range(n_in))
    det = {}
    for c in range(n_in + 1):
        if not any(table[c]):
            continue
        if c == 0:
            det[c] = b.add(LE(0), ins)
        elif c == n_in:
            det[c] = b.add(GE(c), ins)
        else:
            det[c] = b.add(AND(2), [b.add(GE(c), ins), b.add(LE(c), ins)])
    outs = [b.add(OR, [det[c] for c in sorted(det) if table[c][q]]) for q in range(p)]
    return b.finish(outs)


def _adder_into(b: CircuitBuilder, xs: Sequence[int], ys: Sequence[int], keep_carry: bool) -> list[int]:
    """Carry-lookahead sum of two MSB-first words inside ``b``; depth 4."""
    w = len(xs)
    x = list(reversed(xs))  # LSB first internally
    y = list(reversed(ys))
    pr = [b.add(OR, [x[j], y[j]]) for j in range(w)]
    g = [b.add(AND(2), [x[j], y[j]]) for j in range(w)]
    both0 = [b.add(LE(0), [x[j], y[j]]) for j in range(w)]
    xnor = [b.add(OR, [g[j], both0[j]]) for j in range(w)]
    # T[j][i]: carry generated at j and propagated up to position i
    T = {}
    for i in range(1, w + 1):
        for j in range(i):
            T[j, i] = b.add(AND(2 + i - j - 1), [x[j], y[j]] + pr[j + 1:i])
    bodies = []
    for i in range(w):
        odd = b.add(LE(0), [xnor[i]] + [T[j, i] for j in range(i)])
        carried = [b.add(AND(2), [xnor[i], T[j, i]]) for j in range(i)]
        bodies.append([odd] + carried)
    outs = []
    if keep_carry:
        outs.append(b.add(OR, [T[j, w] for j in range(w)]))
    outs += [b.add(OR, bodies[i]) for i in reversed(range(w))]
    return outs


def synth_adder(w: int) -> Circuit:
    """``2w`` inputs (x then y, MSB first) to the ``w+1``-bit sum, carry-out first."""
    if w < 1:
        raise ValueError("width must be at least 1")
    b = CircuitBuilder(2 * w)
    outs = _adder_into(b, list(range(w)), list(range(w, 2 * w)), keep_carry=True)
    return b.finish(outs)


def float_sum_layout(k: int, spec: PrecisionSpec) -> dict:
    """Fixed-point widths used by ``synth_float_sum``."""
    W = (spec.p_m - 1) + (1 << spec.p_e) - 1
    L = max(1, math.ceil(math.log2(k + 1)))
    return {"W": W, "L": L, "w": W + L, "lsb": spec.exp_min - spec.p_m + 2}


def synth_float_sum(k: int, spec: PrecisionSpec, cap: int = DEFAULT_CAP) -> Circuit:
    """``k`` encoded floats in, encoding of their exactly rounded sum out.

    Each float becomes a positive and a negative fixed-point magnitude; each
    place value is counted across the inputs, the counts are summed by
    adders, and the difference is rounded back to a float by a table.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    lay = float_sum_layout(k, spec)
    W, L, w, lsb = lay["W"], lay["L"], lay["w"], lay["lsb"]
    p = spec.p
    if max(p, w + 1) > cap:
        raise TableTooLarge(f"float-sum tables need {max(p, w + 1)} input bits, cap is {cap}")

    def to_fixed(bits):
        q = decode(bits, spec).fraction / Fraction(2) ** lsb
        assert q.denominator == 1 and abs(q) < (1 << W)
        mag = int(abs(q))
        pos = int_to_bits(mag if q > 0 else 0, W)
        neg = int_to_bits(mag if q < 0 else 0, W)
        return pos + neg

    def from_fixed(bits):
        s = bits_to_int(bits) - ((1 << w) - 1)
        return encode(round_fraction(Fraction(s) * Fraction(2) ** lsb, spec))

    conv = synth_local(TruthTable.from_function(p, 2 * W, to_fixed, cap), cap)
    count = synth_symmetric(k, lambda c: int_to_bits(c, L))
    back = synth_local(TruthTable.from_function(w + 1, p, from_fixed, cap), cap)

    b = CircuitBuilder(k * p)
    fixed = [b.embed(conv, list(range(f * p, (f + 1) * p))) for f in range(k)]
    # a fresh constant per slot, since a gate may not read the same source twice
    def zeros(count):
        return [b.add(GE(1)) for _ in range(count)]

    totals = []
    for side in (0, 1):
        addends = []
        for t in range(W):  # t = 0 is the most significant place of the magnitude
            cnt = b.embed(count, [fixed[f][side * W + t] for f in range(k)])
            shift = W - 1 - t
            word = zeros(w - L - shift) + cnt + zeros(shift)
            addends.append(word)
        while len(addends) > 1:
            nxt = [_adder_into(b, addends[i], addends[i + 1], keep_carry=False)
                   for i in range(0, len(addends) - 1, 2)]
            if len(addends) % 2:
                nxt.append(addends[-1])
            addends = nxt
        totals.append(addends[0])
    pos, neg = totals
    inv = [b.add(NOT, [g]) for g in neg]
    s = _adder_into(b, pos, inv, keep_carry=True)
    return b.finish(b.embed(back, s))
