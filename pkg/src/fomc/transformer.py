"""A small log-precision transformer: forward pass, lowering to a column family.

All arithmetic is on p-precision floats with precision ``p(n)`` chosen from
the input length.  Every affine map, layer norm and attention logit is
computed exactly and rounded once per output entry.  Weights are kept as
rationals at a base precision and re-rounded to ``p(n)`` when used.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

from .circuit import PerNFamily
from .graph import (INPUT_TYPE, ColumnFamily, ColumnSpec, ComputationGraph, Primitive,
                    PrimitiveRegistry, eval_graph, materialize_graph)
from .pfloat import (PFloat, PrecisionSpec, arith, decode, encode, exp_p, parse_literal,
                     relu, round_fraction, round_real, sum_iter)
from .synth import DEFAULT_CAP, TruthTable, bits_to_int, int_to_bits, synth_local, synth_sparse

__all__ = [
    "UnknownToken", "ShapeMismatch", "SynthesisCapExceeded",
    "HeadWeights", "LayerWeights", "TransformerSpec", "precision_for",
    "embed", "layer_norm", "affine", "similarity", "attention_head", "activation",
    "classify", "forward", "forward_states", "to_graph_family", "encode_input",
    "column_template", "eval_lowered", "majority_transformer", "toy_transformer", "from_config", "to_config",
    "MAX_TRACE_STRINGS",
]

MAX_TRACE_STRINGS = 4096
MEMO_LIMIT = 1 << 18


class UnknownToken(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class SynthesisCapExceeded(ValueError):
    pass


Matrix = Sequence[Sequence[Fraction]]


def _fr(x) -> Fraction:
    if isinstance(x, PFloat):
        return x.fraction
    if isinstance(x, str):
        return parse_literal(x).fraction if x.startswith("pf(") else Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    return Fraction(x)


def _mat(rows, r, c, what):
    out = [[_fr(v) for v in row] for row in rows]
    if len(out) != r or any(len(row) != c for row in out):
        raise ShapeMismatch(f"{what} must be {r}x{c}")
    return out


def _vec(v, r, what):
    out = [_fr(x) for x in v]
    if len(out) != r:
        raise ShapeMismatch(f"{what} must have length {r}")
    return out


@dataclass
class HeadWeights:
    Wq: Matrix
    bq: Sequence[Fraction]
    Wk: Matrix
    bk: Sequence[Fraction]
    Wh: Matrix
    bh: Sequence[Fraction]


@dataclass
class LayerWeights:
    heads: list
    Wo: Matrix
    bo: Sequence[Fraction]
    W1: Matrix
    b1: Sequence[Fraction]
    W2: Matrix
    b2: Sequence[Fraction]
    ln_attn: tuple = (Fraction(1), Fraction(0))
    ln_ffn: tuple = (Fraction(1), Fraction(0))


@dataclass
class TransformerSpec:
    """Shapes, weights and the precision schedule.

    ``positional`` is ``"bits"`` (coordinate ``c`` holds bit ``c`` of the
    position, least significant first) or ``"zero"``.  ``precision`` is
    ``(c_m, c_e)`` for the length-dependent schedule; ``fixed_precision``
    pins ``(p_m, p_e)`` instead.  ``classify_at`` is ``"last"`` or ``"first"``.
    """

    d: int
    h: int
    m: int
    w: int
    alphabet: tuple
    V: Matrix
    layers: list
    ln_out: tuple
    w_out: Sequence[Fraction]
    b_out: Fraction
    positional: str = "bits"
    masked: bool = False
    precision: tuple = (2, 2)
    fixed_precision: tuple | None = None
    classify_at: str = "last"
    base: PrecisionSpec = field(default_factory=lambda: PrecisionSpec(12, 6))

    def __post_init__(self):
        d, h, m, w = self.d, self.h, self.m, self.w
        if h < 1 or m % h:
            raise ShapeMismatch("the model dimension must be divisible by the head count")
        dk = m // h
        self.alphabet = tuple(self.alphabet)
        rnd = lambda x: round_fraction(x, self.base).fraction  # noqa: E731
        rm = lambda rows: [[rnd(x) for x in row] for row in rows]  # noqa: E731
        rv = lambda v: [rnd(x) for x in v]  # noqa: E731
        self.V = rm(_mat(self.V, len(self.alphabet), m, "V"))
        if len(self.layers) != d:
            raise ShapeMismatch(f"expected {d} layers, got {len(self.layers)}")
        for lw in self.layers:
            if len(lw.heads) != h:
                raise ShapeMismatch(f"expected {h} heads per layer")
            for hw in lw.heads:
                hw.Wq, hw.Wk, hw.Wh = (rm(_mat(x, dk, m, "head matrix")) for x in (hw.Wq, hw.Wk, hw.Wh))
                hw.bq, hw.bk, hw.bh = (rv(_vec(x, dk, "head bias")) for x in (hw.bq, hw.bk, hw.bh))
            lw.Wo, lw.bo = rm(_mat(lw.Wo, m, m, "Wo")), rv(_vec(lw.bo, m, "bo"))
            lw.W1, lw.b1 = rm(_mat(lw.W1, w, m, "W1")), rv(_vec(lw.b1, w, "b1"))
            lw.W2, lw.b2 = rm(_mat(lw.W2, m, w, "W2")), rv(_vec(lw.b2, m, "b2"))
            lw.ln_attn = tuple(rnd(_fr(x)) for x in lw.ln_attn)
            lw.ln_ffn = tuple(rnd(_fr(x)) for x in lw.ln_ffn)
        self.ln_out = tuple(rnd(_fr(x)) for x in self.ln_out)
        self.w_out = rv(_vec(self.w_out, m, "w_out"))
        self.b_out = rnd(_fr(self.b_out))
        if self.positional not in ("bits", "zero"):
            raise ValueError("positional must be 'bits' or 'zero'")
        if self.classify_at not in ("last", "first"):
            raise ValueError("classify_at must be 'last' or 'first'")
        # component results keyed by their inputs; the weights are fixed from here on
        self._memo = {}

    def memo(self, key, compute):
        got = self._memo.get(key)
        if got is None:
            if len(self._memo) >= MEMO_LIMIT:
                self._memo.clear()
            got = self._memo[key] = compute()
        return got

    @property
    def dk(self):
        return self.m // self.h

    def spec_for(self, n: int) -> PrecisionSpec:
        if self.fixed_precision is not None:
            return PrecisionSpec(*self.fixed_precision)
        return precision_for(n, *self.precision)


def precision_for(n: int, cm: int = 2, ce: int = 2) -> PrecisionSpec:
    """``p_m = cm + ceil(log2(n+1))``, ``p_e = ce + ceil(log2(ceil(log2(n+2))))``."""
    clog = lambda v: (v - 1).bit_length() if v > 1 else 0  # noqa: E731
    return PrecisionSpec(cm + clog(n + 1), ce + clog(clog(n + 2)))


# -- components ------------------------------------------------------------------

def _sgn(x) -> int:
    return (x > 0) - (x < 0)


def _sgn_minus_sqrt(u: Fraction, r: Fraction, S: Fraction) -> int:
    """Sign of ``u - r * sqrt(S)`` for ``S > 0``, exactly."""
    su, sr = _sgn(u), _sgn(r)
    if su != sr:
        return su if su != 0 else -sr
    if su == 0:
        return 0
    d = _sgn(u * u - r * r * S)
    return d if su > 0 else -d


def _round_over_sqrt(u: Fraction, S: Fraction, b: Fraction, spec: PrecisionSpec) -> PFloat:
    """Correctly rounded ``u / sqrt(S) + b``."""
    approx = Fraction(float(u) / math.sqrt(float(S)) + float(b)) if float(S) > 0 else b
    return round_real(lambda t: _sgn_minus_sqrt(u, t - b, S), approx, spec)


def _r(x: Fraction, spec) -> PFloat:
    return round_fraction(x, spec)


def embed(spec: TransformerSpec, sym: str, i: int, n: int) -> list:
    if sym not in spec.alphabet:
        raise UnknownToken(sym)
    if not 1 <= i <= n:
        raise ValueError(f"position {i} outside 1..{n}")
    return _embed_index(spec, spec.alphabet.index(sym), i, spec.spec_for(n))


def _positional(spec: TransformerSpec, i: int, P: PrecisionSpec) -> list:
    if spec.positional == "zero":
        return [_r(Fraction(0), P)] * spec.m
    return [_r(Fraction((i >> c) & 1), P) for c in range(spec.m)]


def _embed_index(spec, t, i, P):
    # token indices past the alphabet (unused bit patterns) embed as the zero row
    row = spec.V[t] if 0 <= t < len(spec.alphabet) else [Fraction(0)] * spec.m
    return [arith("add", _r(v, P), f) for v, f in zip(row, _positional(spec, i, P))]


def layer_norm(x: Sequence[PFloat], a, b, spec: PrecisionSpec) -> list:
    """``a (x - mean) / |x - mean| + b`` per entry, one rounding each; zero norm gives ``b``."""
    a, b = _fr(a), _fr(b)
    vals = [v.fraction for v in x]
    if not vals:
        raise ShapeMismatch("layer norm of an empty vector")
    mu = sum(vals, Fraction(0)) / len(vals)
    c = [v - mu for v in vals]
    S = sum((t * t for t in c), Fraction(0))
    if S == 0 or a == 0:
        return [_r(b, spec) for _ in c]
    return [_round_over_sqrt(a * t, S, b, spec) for t in c]


def affine(W: Matrix, b: Sequence, x: Sequence[PFloat], spec: PrecisionSpec) -> list:
    """``W x + b`` with each entry rounded once after exact accumulation."""
    if any(len(row) != len(x) for row in W) or len(b) != len(W):
        raise ShapeMismatch(f"W is {len(W)}x{len(W[0]) if W else 0}, x has {len(x)}, b has {len(b)}")
    xs = [v.fraction for v in x]
    out = []
    for row, bias in zip(W, b):
        acc = _fr(bias)
        for wv, xv in zip(row, xs):
            acc += _r(_fr(wv), spec).fraction * xv
        out.append(_r(acc, spec))
    return out


def _affine_p(W, b, x, P):
    # bias rounded to the working precision like the weights
    return affine(W, [_r(_fr(v), P).fraction for v in b], x, P)


def _logit(q: Sequence[PFloat], k: Sequence[PFloat], dk: int, P) -> PFloat:
    u = sum((a.fraction * c.fraction for a, c in zip(q, k)), Fraction(0))
    return _round_over_sqrt(u, Fraction(dk), Fraction(0), P)


def _head_query(spec, lw, hw, h_i, P):
    def compute():
        a, b = lw.ln_attn
        return tuple(_affine_p(hw.Wq, hw.bq, layer_norm(h_i, a, b, P), P))
    return spec.memo(("q", id(hw), tuple(h_i), P), compute)


def _head_kv(spec, lw, hw, h_j, P):
    def compute():
        a, b = lw.ln_attn
        ln = layer_norm(h_j, a, b, P)
        return tuple(_affine_p(hw.Wk, hw.bk, ln, P)), tuple(_affine_p(hw.Wh, hw.bh, ln, P))
    return spec.memo(("kv", id(hw), tuple(h_j), P), compute)


_exp = lru_cache(maxsize=1 << 16)(exp_p)


def similarity(spec: TransformerSpec, layer: int, head: int, h_i, h_j, P: PrecisionSpec) -> PFloat:
    """``exp(q_i . k_j / sqrt(m/h))`` with both arguments layer-normed first."""
    lw = spec.layers[layer]
    hw = lw.heads[head]
    q = _head_query(spec, lw, hw, h_i, P)
    k, _ = _head_kv(spec, lw, hw, h_j, P)
    return _exp(_logit(q, k, spec.dk, P))


def _attend(spec, lw, hw, q, states, P):
    kv = tuple(_head_kv(spec, lw, hw, h_j, P) for h_j in states)
    return list(spec.memo(("attn", id(hw), tuple(q), kv, P), lambda: tuple(_attend_kv(spec, q, kv, P))))


def _attend_kv(spec, q, kv, P):
    sims = [_exp(_logit(q, k, spec.dk, P)) for k, _ in kv]
    vals = [v for _, v in kv]
    Z = sum_iter(sims, P)
    if Z.is_zero:
        return [_r(Fraction(0), P)] * spec.dk
    wts = [arith("div", s, Z) for s in sims]
    return [sum_iter([arith("mul", wt, v[c]) for wt, v in zip(wts, vals)], P) for c in range(spec.dk)]


def attention_head(spec: TransformerSpec, layer: int, head: int, states, i: int, P: PrecisionSpec) -> list:
    """Output of one head at 1-based position ``i``; masked heads see positions ``1..i``."""
    lw = spec.layers[layer]
    hw = lw.heads[head]
    q = _head_query(spec, lw, hw, states[i - 1], P)
    seen = states[:i] if spec.masked else states
    return _attend(spec, lw, hw, q, seen, P)


def activation(spec: TransformerSpec, layer: int, heads, h_i, P: PrecisionSpec) -> list:
    cat = tuple(v for a in heads for v in a)
    if len(cat) != spec.m or len(h_i) != spec.m:
        raise ShapeMismatch("head outputs must concatenate to the model dimension")
    key = ("act", layer, cat, tuple(h_i), P)
    return list(spec.memo(key, lambda: tuple(_activation(spec, layer, cat, h_i, P))))


def _activation(spec, layer, cat, h_i, P):
    lw = spec.layers[layer]
    Wo = [[_r(v, P).fraction for v in row] for row in lw.Wo]
    o = []
    for r in range(spec.m):
        acc = _r(lw.bo[r], P).fraction + h_i[r].fraction
        acc += sum((wv * a.fraction for wv, a in zip(Wo[r], cat)), Fraction(0))
        o.append(_r(acc, P))
    a, b = lw.ln_ffn
    hidden = [relu(z) for z in _affine_p(lw.W1, lw.b1, layer_norm(o, a, b, P), P)]
    W2 = [[_r(v, P).fraction for v in row] for row in lw.W2]
    out = []
    for r in range(spec.m):
        acc = _r(lw.b2[r], P).fraction + o[r].fraction
        acc += sum((wv * z.fraction for wv, z in zip(W2[r], hidden)), Fraction(0))
        out.append(_r(acc, P))
    return out


def classify(spec: TransformerSpec, h, P: PrecisionSpec) -> int:
    a, b = spec.ln_out
    ln = layer_norm(h, a, b, P)
    val = _affine_p([spec.w_out], [spec.b_out], ln, P)[0]
    return int(val.fraction >= 0)


def _check_input(spec, x):
    if len(x) < 1:
        raise ValueError("input must be nonempty")
    for s in x:
        if s not in spec.alphabet:
            raise UnknownToken(s)


def forward_states(spec: TransformerSpec, x: Sequence[str]) -> list:
    """Hidden states per layer: ``states[l][i]`` is position ``i+1`` after ``l`` layers."""
    _check_input(spec, x)
    n = len(x)
    P = spec.spec_for(n)
    hs = [_embed_index(spec, spec.alphabet.index(s), i + 1, P) for i, s in enumerate(x)]
    out = [hs]
    for ell in range(spec.d):
        heads = [[attention_head(spec, ell, k, hs, i + 1, P) for k in range(spec.h)] for i in range(n)]
        hs = [activation(spec, ell, heads[i], hs[i], P) for i in range(n)]
        out.append(hs)
    return out


def forward(spec: TransformerSpec, x: Sequence[str]) -> int:
    states = forward_states(spec, x)
    P = spec.spec_for(len(x))
    h = states[-1][-1] if spec.classify_at == "last" else states[-1][0]
    return classify(spec, h, P)


# -- lowering to a column family ---------------------------------------------------

def _token_bits(spec: TransformerSpec) -> int:
    return max(1, (len(spec.alphabet) - 1).bit_length())


def _pos_bits(n: int) -> int:
    return n.bit_length()


def encode_input(spec: TransformerSpec, x: Sequence[str]) -> list:
    """Per position, the token index bits followed by the position bits (MSB first)."""
    _check_input(spec, x)
    n = len(x)
    tb, pb = _token_bits(spec), _pos_bits(n)
    return [int_to_bits(spec.alphabet.index(s), tb) + int_to_bits(i + 1, pb) for i, s in enumerate(x)]


def column_template(spec: TransformerSpec) -> ColumnSpec:
    """Slots: input, embed, per layer the query and attention nodes of each head
    then the activation, and finally the classifier."""
    nodes, edges = [INPUT_TYPE, "embed"], [[], [0]]
    out_slots, attn_layer = [1], {}
    for ell in range(spec.d):
        prev = out_slots[-1]
        queries = []
        for k in range(spec.h):
            queries.append(len(nodes))
            nodes.append(f"query{ell}.{k}")
            edges.append([prev])
        attns = []
        for k in range(spec.h):
            attns.append(len(nodes))
            attn_layer[len(nodes)] = ell
            nodes.append(f"attn{ell}.{k}")
            edges.append([queries[k]])
        out_slots.append(len(nodes))
        nodes.append(f"act{ell}")
        edges.append(attns + [prev])
    nodes.append("classify")
    edges.append([out_slots[-1]])
    return ColumnSpec(ComputationGraph(nodes, edges), out_slots, attn_layer, masked=spec.masked)


def _dec_vec(bits, count, P):
    p = P.p
    return [decode(bits[c * p:(c + 1) * p], P) for c in range(count)]


def _enc_vec(vec):
    return tuple(b for f in vec for b in encode(f))


class _Lowering:
    """Reference evaluators, widths and synthesized circuits for one transformer."""

    def __init__(self, spec: TransformerSpec, table_bits: int, cap: int):
        self.spec = spec
        self.table_bits = table_bits
        self.cap = cap
        self.col = column_template(spec)
        self.family = ColumnFamily(self.col)
        self.registry = PrimitiveRegistry(self._prims(), input_width=self.input_width, name="transformer")
        self._rows = {}

    def input_width(self, n):
        return _token_bits(self.spec) + _pos_bits(n)

    # evaluators over bitstrings
    def _prims(self):
        s = self.spec
        m, dk, h = s.m, s.dk, s.h
        P = s.spec_for
        prims = []

        def ev_embed(n, args):
            bits = args[0]
            tb = _token_bits(s)
            t, i = bits_to_int(bits[:tb]), bits_to_int(bits[tb:])
            return _enc_vec(_embed_index(s, t, i, P(n)))

        prims.append(self._prim("embed", lambda n: [self.input_width(n)], lambda n: m * P(n).p, ev_embed))
        for ell in range(s.d):
            lw = s.layers[ell]
            for k in range(h):
                hw = lw.heads[k]

                def ev_query(n, args, lw=lw, hw=hw):
                    Pn = P(n)
                    return _enc_vec(_head_query(s, lw, hw, _dec_vec(args[0], m, Pn), Pn))

                def ev_attn(n, args, lw=lw, hw=hw):
                    Pn = P(n)
                    states = [_dec_vec(a, m, Pn) for a in args[:-1]]
                    q = _dec_vec(args[-1], dk, Pn)
                    return _enc_vec(_attend(s, lw, hw, q, states, Pn))

                prims.append(self._prim(f"query{ell}.{k}", lambda n: [m * P(n).p],
                                        lambda n: dk * P(n).p, ev_query))
                if s.masked:
                    widths = lambda n, count: [m * P(n).p] * (count - 1) + [dk * P(n).p]  # noqa: E731
                else:
                    widths = lambda n: [m * P(n).p] * n + [dk * P(n).p]  # noqa: E731
                prims.append(self._prim(f"attn{ell}.{k}", widths, lambda n: dk * P(n).p, ev_attn,
                                        variadic=s.masked))

            def ev_act(n, args, ell=ell):
                Pn = P(n)
                heads = [_dec_vec(a, dk, Pn) for a in args[:h]]
                return _enc_vec(activation(s, ell, heads, _dec_vec(args[h], m, Pn), Pn))

            prims.append(self._prim(f"act{ell}", lambda n: [dk * P(n).p] * h + [m * P(n).p],
                                    lambda n: m * P(n).p, ev_act))

        def ev_cls(n, args):
            Pn = P(n)
            return (classify(s, _dec_vec(args[0], m, Pn), Pn),)

        prims.append(self._prim("classify", lambda n: [m * P(n).p], 1, ev_cls))
        return prims

    def _prim(self, name, widths, out, fn, variadic=False):
        prim = Primitive(name, None, widths, out, fn, variadic=variadic)
        prim.arity = (lambda n: len(prim.in_widths(n))) if not variadic else None
        if not variadic:
            prim.family = PerNFamily(lambda n, name=name: self._synthesize(name, n), name)
        return prim

    # circuits
    def reachable(self, n):
        """Inputs each node type sees over all strings of length ``n``."""
        if n not in self._rows:
            count = len(self.spec.alphabet) ** n
            if count > MAX_TRACE_STRINGS:
                raise SynthesisCapExceeded(
                    f"{count} strings of length {n} exceed the trace limit of {MAX_TRACE_STRINGS}")
            g = materialize_graph(self.family, n)
            rows = {}

            def trace(j, t, args, out):
                rows.setdefault(t, {})[tuple(b for a in args for b in a)] = tuple(out)

            for x in itertools.product(self.spec.alphabet, repeat=n):
                eval_graph(g, self.registry, encode_input(self.spec, x), n, trace)
            self._rows[n] = rows
        return self._rows[n]

    def _synthesize(self, name, n):
        prim = self.registry[name]
        m_in = sum(prim.in_widths(n))
        p_out = prim.out_width(n)
        if m_in <= min(self.table_bits, self.cap):
            def f(bits):
                args, at = [], 0
                for wdt in prim.in_widths(n):
                    args.append(bits[at:at + wdt])
                    at += wdt
                return prim.fn(n, args)
            return synth_local(TruthTable.from_function(m_in, p_out, f, self.cap), self.cap)
        return synth_sparse(m_in, p_out, self.reachable(n).get(name, {}))

    def uses_full_table(self, name, n):
        return sum(self.registry[name].in_widths(n)) <= min(self.table_bits, self.cap)


def to_graph_family(spec: TransformerSpec, table_bits: int = 12, cap: int = DEFAULT_CAP):
    """``(ColumnFamily, PrimitiveRegistry)`` for the transformer.

    Component circuits come from the reference evaluators: a full truth table
    when the input has at most ``table_bits`` bits, otherwise a DNF over the
    inputs the component actually receives on strings of that length.
    """
    if spec.classify_at != "last":
        raise ValueError("lowering classifies at the last position only")
    low = _Lowering(spec, table_bits, cap)
    low.family.lowering = low
    return low.family, low.registry


def eval_lowered(spec: TransformerSpec, x: Sequence[str], lowered=None) -> int:
    fam, reg = lowered or to_graph_family(spec)
    g = materialize_graph(fam, len(x))
    return eval_graph(g, reg, encode_input(spec, x), len(x))[0]


# -- ready-made transformers --------------------------------------------------------

def majority_transformer() -> TransformerSpec:
    """One layer with uniform attention averaging a +-1 token indicator.

    Coordinate 0 of the embedding is +1 for ``b`` and -1 for ``a``; the head
    copies it, the output map scales the average into coordinate 2 and the
    classifier reads the sign of coordinate 2 against coordinate 3.
    """
    m = 4
    z = lambda r, c: [[0] * c for _ in range(r)]  # noqa: E731
    Wh = z(m, m)
    Wh[0][0] = 1
    Wo = z(m, m)
    Wo[2][0] = 4
    head = HeadWeights(z(m, m), [0] * m, z(m, m), [0] * m, Wh, [0] * m)
    layer = LayerWeights([head], Wo, [0] * m, z(1, m), [0], z(m, 1), [0] * m)
    return TransformerSpec(d=1, h=1, m=m, w=1, alphabet=("a", "b"),
                           V=[[-1, 1, 0, 0], [1, -1, 0, 0]], layers=[layer],
                           ln_out=(1, 0), w_out=[0, 0, 1, -1], b_out=0, positional="zero")


def toy_transformer(seed: int = 0, d: int = 1, h: int = 2, m: int = 4, w: int = 4,
                    alphabet=("a", "b"), masked: bool = False, positional: str = "bits") -> TransformerSpec:
    """Weights drawn from ``{-1, -1/2, 0, 1/2, 1}`` with a seeded generator."""
    rng = random.Random(seed)
    grid = [Fraction(-1), Fraction(-1, 2), Fraction(0), Fraction(1, 2), Fraction(1)]
    mat = lambda r, c: [[rng.choice(grid) for _ in range(c)] for _ in range(r)]  # noqa: E731
    vec = lambda r: [rng.choice(grid) for _ in range(r)]  # noqa: E731
    dk = m // h
    layers = []
    for _ in range(d):
        heads = [HeadWeights(mat(dk, m), vec(dk), mat(dk, m), vec(dk), mat(dk, m), vec(dk)) for _ in range(h)]
        layers.append(LayerWeights(heads, mat(m, m), vec(m), mat(w, m), vec(w), mat(m, w), vec(m)))
    return TransformerSpec(d=d, h=h, m=m, w=w, alphabet=tuple(alphabet), V=mat(len(alphabet), m),
                           layers=layers, ln_out=(1, 0), w_out=vec(m), b_out=rng.choice(grid),
                           positional=positional, masked=masked)


# -- config files -------------------------------------------------------------------

def _num(x):
    return str(x) if isinstance(x, Fraction) else x


def to_config(spec: TransformerSpec) -> dict:
    mat = lambda M: [[_num(v) for v in row] for row in M]  # noqa: E731
    vec = lambda v: [_num(x) for x in v]  # noqa: E731
    cfg = {
        "d": spec.d, "h": spec.h, "m": spec.m, "w": spec.w, "alphabet": "".join(spec.alphabet),
        "masked": spec.masked, "positional": spec.positional, "classify_at": spec.classify_at,
        "precision": {"cm": spec.precision[0], "ce": spec.precision[1]},
        "base": {"pm": spec.base.p_m, "pe": spec.base.p_e},
        "weights": {
            "V": mat(spec.V),
            "layers": [{
                "heads": [{k: (mat(getattr(hw, k)) if k.startswith("W") else vec(getattr(hw, k)))
                           for k in ("Wq", "bq", "Wk", "bk", "Wh", "bh")} for hw in lw.heads],
                "Wo": mat(lw.Wo), "bo": vec(lw.bo), "W1": mat(lw.W1), "b1": vec(lw.b1),
                "W2": mat(lw.W2), "b2": vec(lw.b2),
                "ln_attn": vec(lw.ln_attn), "ln_ffn": vec(lw.ln_ffn),
            } for lw in spec.layers],
            "ln_out": vec(spec.ln_out), "w_out": vec(spec.w_out), "b_out": _num(spec.b_out),
        },
    }
    if spec.fixed_precision is not None:
        cfg["precision"] = {"pm": spec.fixed_precision[0], "pe": spec.fixed_precision[1]}
    return cfg


def from_config(cfg) -> TransformerSpec:
    """Build a spec from a dict or JSON text; numbers may be ints, ``"p/q"`` strings or float literals."""
    if isinstance(cfg, str):
        cfg = json.loads(cfg)
    wts = cfg["weights"]
    prec = cfg.get("precision", {})
    base = cfg.get("base", {"pm": 12, "pe": 6})
    layers = []
    for lw in wts.get("layers", []):
        heads = [HeadWeights(hw["Wq"], hw["bq"], hw["Wk"], hw["bk"], hw["Wh"], hw["bh"]) for hw in lw["heads"]]
        layers.append(LayerWeights(heads, lw["Wo"], lw["bo"], lw["W1"], lw["b1"], lw["W2"], lw["b2"],
                                   tuple(lw.get("ln_attn", (1, 0))), tuple(lw.get("ln_ffn", (1, 0)))))
    fixed = (prec["pm"], prec["pe"]) if "pm" in prec else None
    return TransformerSpec(
        d=cfg["d"], h=cfg["h"], m=cfg["m"], w=cfg["w"], alphabet=tuple(cfg["alphabet"]),
        V=wts["V"], layers=layers, ln_out=tuple(wts.get("ln_out", (1, 0))), w_out=wts["w_out"],
        b_out=wts.get("b_out", 0), positional=cfg.get("positional", "bits"),
        masked=cfg.get("masked", False), precision=(prec.get("cm", 2), prec.get("ce", 2)),
        fixed_precision=fixed, classify_at=cfg.get("classify_at", "last"),
        base=PrecisionSpec(base["pm"], base["pe"]))
