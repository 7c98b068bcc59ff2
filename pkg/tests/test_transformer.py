import itertools
import json
import math
import random
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from fomc import fom
from fomc.circuit import eval_circuit
from fomc.graph import materialize_graph
from fomc.pfloat import PrecisionSpec, arith, exp_p, round_fraction
from fomc.transformer import (HeadWeights, LayerWeights, ShapeMismatch, TransformerSpec, UnknownToken,
                              activation, affine, attention_head, classify, column_template, embed,
                              encode_input, eval_lowered, forward, forward_states, from_config,
                              layer_norm, majority_transformer, precision_for, similarity, to_config,
                              to_graph_family, toy_transformer)

WIDE = PrecisionSpec(12, 6)


def zeros(r, c):
    return [[0] * c for _ in range(r)]


def eye(m):
    return [[int(r == c) for c in range(m)] for r in range(m)]


def small_spec(m=2, head=None, layer=None, **kw):
    head = head or HeadWeights(zeros(m, m), [0] * m, zeros(m, m), [0] * m, eye(m), [0] * m)
    layer = layer or LayerWeights([head], zeros(m, m), [0] * m, zeros(1, m), [0], zeros(m, 1), [0] * m)
    kw.setdefault("fixed_precision", (12, 6))
    return TransformerSpec(d=1, h=1, m=m, w=1, alphabet=("a", "b"), V=[[1, -1] + [0] * (m - 2), [-1, 1] + [0] * (m - 2)],
                           layers=[layer], ln_out=(1, 0), w_out=[1] + [0] * (m - 1), b_out=0, **kw)


def f(x, spec=WIDE):
    return round_fraction(Fraction(x), spec)


def test_precision_schedule():
    assert precision_for(1) == PrecisionSpec(3, 3)
    assert precision_for(3) == PrecisionSpec(4, 4)
    assert precision_for(11) == PrecisionSpec(6, 4)
    assert precision_for(8, cm=3, ce=1) == PrecisionSpec(7, 3)
    for n in range(1, 300):
        pm = 2 + math.ceil(math.log2(n + 1))
        pe = 2 + math.ceil(math.log2(math.ceil(math.log2(n + 2))))
        assert precision_for(n) == PrecisionSpec(pm, pe)


def test_embed_adds_position_bits():
    spec = toy_transformer(0)
    got = embed(spec, "b", 3, 4)
    P = spec.spec_for(4)
    want = [arith("add", round_fraction(v, P), round_fraction(bit, P)) for v, bit in zip(spec.V[1], (1, 1, 0, 0))]
    assert got == want


def over_sqrt(u, d, spec=WIDE):
    # u / sqrt(d) to 200 bits, then rounded; ties cannot occur for irrational values
    with mpmath.workprec(200):
        x = mpmath.mpf(abs(u.numerator)) / u.denominator / mpmath.sqrt(d)
        man, exp = x.man_exp
    mag = Fraction(int(man)) * Fraction(2) ** int(exp)
    return round_fraction(mag if u >= 0 else -mag, spec)


def test_layer_norm_of_a_pair():
    out = layer_norm([f(1), f(-1)], 1, 0, WIDE)
    r = 1 / math.sqrt(2)
    assert [float(v) for v in out] == pytest.approx([r, -r], rel=2 ** -10)
    assert out == [over_sqrt(Fraction(1), 2), over_sqrt(Fraction(-1), 2)]


def test_layer_norm_of_constant_vector_is_bias():
    assert layer_norm([f(3), f(3)], 1, Fraction(1, 2), WIDE) == [f(Fraction(1, 2))] * 2


def test_affine_example():
    S = PrecisionSpec(4, 3)
    out = affine([[1, 1], [1, -1]], [0, 0], [f(5, S), f(5, S)], S)
    assert [v.fraction for v in out] == [10, 0]


def test_affine_shape_check():
    with pytest.raises(ShapeMismatch):
        affine([[1, 1]], [0], [f(1)], WIDE)


def test_similarity_of_identical_states():
    m = 2
    head = HeadWeights(eye(m), [0] * m, eye(m), [0] * m, eye(m), [0] * m)
    spec = small_spec(m, head=head)
    h = [f(1), f(-1)]
    ln = layer_norm(h, 1, 0, WIDE)
    u = sum(v.fraction * v.fraction for v in ln)
    assert similarity(spec, 0, 0, h, h, WIDE) == exp_p(over_sqrt(u, m))


def test_large_negative_logit_underflows():
    S = PrecisionSpec(4, 3)
    assert exp_p(round_fraction(-8, S)).is_zero


def test_uniform_attention_averages_values():
    spec = small_spec(2)
    states = [[f(1), f(-1)], [f(Fraction(1, 2)), f(3)]]
    out = attention_head(spec, 0, 0, states, 1, WIDE)
    vals = [layer_norm(s, 1, 0, WIDE) for s in states]
    want = [round_fraction((a.fraction + b.fraction) / 2, WIDE) for a, b in zip(*vals)]
    assert out == want


def test_residual_activation_with_identity_output_map():
    m = 2
    head = HeadWeights(zeros(m, m), [0] * m, zeros(m, m), [0] * m, eye(m), [0] * m)
    layer = LayerWeights([head], eye(m), [0] * m, zeros(1, m), [0], zeros(m, 1), [0] * m)
    spec = small_spec(m, layer=layer)
    a, h = [f(Fraction(3, 4)), f(-2)], [f(1), f(Fraction(1, 8))]
    assert activation(spec, 0, [a], h, WIDE) == [arith("add", x, y) for x, y in zip(a, h)]


def test_majority_transformer_examples():
    M = majority_transformer()
    assert forward(M, "bba") == 1
    assert forward(M, "aab") == 0


def test_majority_transformer_matches_sentence_up_to_seven():
    M = majority_transformer()
    phi = fom.library_sentence("majority")
    for n in (1, 3, 5, 7):
        for w in itertools.product("ab", repeat=n):
            assert forward(M, w) == int(fom.evaluate(phi, w))


def test_unknown_token_and_empty_input():
    spec = toy_transformer(0)
    with pytest.raises(UnknownToken):
        forward(spec, "abc")
    with pytest.raises(ValueError):
        forward(spec, "")


def test_shape_checks():
    with pytest.raises(ShapeMismatch):
        toy_transformer(0, h=3)
    with pytest.raises(ShapeMismatch):
        TransformerSpec(d=1, h=1, m=2, w=1, alphabet="ab", V=[[0, 0]], layers=[], ln_out=(1, 0),
                        w_out=[0, 0], b_out=0)


def test_masked_positions_ignore_the_future():
    spec = toy_transformer(3, masked=True)
    for ell in range(spec.d + 1):
        a = forward_states(spec, "ab")[ell][0]
        b = forward_states(spec, "aa")[ell][0]
        assert a == b


def test_classify_at_first():
    spec = toy_transformer(2)
    spec.classify_at = "first"
    states = forward_states(spec, "abb")
    assert forward(spec, "abb") == classify(spec, states[-1][0], spec.spec_for(3))


def test_config_round_trip():
    spec = toy_transformer(5, positional="zero")
    again = from_config(json.dumps(to_config(spec)))
    for n in (1, 2, 3):
        for w in itertools.product("ab", repeat=n):
            assert forward(again, w) == forward(spec, w)


def test_config_accepts_literals_and_ratios():
    cfg = to_config(majority_transformer())
    cfg["weights"]["layers"][0]["Wo"][2][0] = "8/2"
    cfg["weights"]["b_out"] = "pf(0,0;pm=2,pe=2)"
    spec = from_config(cfg)
    assert spec.layers[0].Wo[2][0] == 4 and spec.b_out == 0


def test_encode_input_layout():
    spec = toy_transformer(0)
    assert encode_input(spec, "ba") == [(1, 0, 1), (0, 1, 0)]


def test_column_size_and_graph_size():
    spec = toy_transformer(0, d=2, h=2)
    col = column_template(spec)
    assert col.K.size == 2 + spec.d * (2 * spec.h + 1) + 1
    fam, _ = to_graph_family(spec)
    assert materialize_graph(fam, 3).size == 3 * col.K.size


def test_lowered_graph_matches_forward():
    spec = toy_transformer(2)
    low = to_graph_family(spec)
    for n in (1, 2, 3):
        for w in itertools.product("ab", repeat=n):
            assert eval_lowered(spec, w, low) == forward(spec, w)


def test_component_circuits_match_their_evaluators():
    spec = toy_transformer(4)
    fam, reg = to_graph_family(spec)
    n = 3
    rng = random.Random(0)
    rows = fam.lowering.reachable(n)
    for t, prim in reg.items():
        c = prim.family.circuit(n)
        m_in = c.n_inputs
        if fam.lowering.uses_full_table(t, n):
            xs = [tuple(rng.randrange(2) for _ in range(m_in)) for _ in range(500)]
        else:
            # synthesized from the reachable inputs only; check those
            seen = list(rows[t])
            xs = [rng.choice(seen) for _ in range(500)]
        got = eval_circuit(c, np.array(xs, dtype=np.uint8))
        widths = prim.in_widths(n)
        for x, y in zip(xs, got):
            args, at = [], 0
            for wd in widths:
                args.append(x[at:at + wd])
                at += wd
            assert tuple(y.tolist()) == tuple(prim.fn(n, args)), t


def test_lowering_rejects_first_position_classifier():
    spec = toy_transformer(0)
    spec.classify_at = "first"
    with pytest.raises(ValueError):
        to_graph_family(spec)


def test_weights_are_rounded_to_base_precision():
    spec = TransformerSpec(d=0, h=1, m=2, w=1, alphabet="ab", V=[[Fraction(1, 3), 0], [0, 0]], layers=[],
                           ln_out=(1, 0), w_out=[1, 0], b_out=0)
    assert spec.V[0][0] == round_fraction(Fraction(1, 3), spec.base).fraction
