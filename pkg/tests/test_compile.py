import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fomc.circuit import AND, GE, INPUT, Circuit, CircuitBuilder, FixedFamily, PerNFamily, eval_circuit, materialize
from fomc.compile import (BoundViolation, NotPowerOfTwo, SizeOverflow, UnsupportedGraph, block_requirement,
                          bsize_fn, check_bounds, compile_family, pad_family, uniform_block_mapping)
from fomc.graph import ComputationGraph, FixedGraphFamily, eval_graph, materialize_graph
from fomc.registries import arith_registry, or_registry, random_graph_family
from fomc.transformer import to_graph_family, toy_transformer


def and_circuit():
    # 2 inputs, an AND and a copy: 4 gates
    b = CircuitBuilder(2)
    g = b.add(AND(2), [0, 1])
    return b.finish([b.add(GE(1), [g])])


def small_circuit(rng, k, internal, outputs):
    gates = [INPUT] * k
    in_edges = [[] for _ in range(k)]
    for j in range(k, k + internal):
        srcs = rng.sample(range(j), rng.randint(1, min(j, 3)))
        gates.append(GE(rng.randint(1, len(srcs))))
        in_edges.append(srcs)
    return Circuit(gates, in_edges, outputs)


def inputs_for(c):
    k = c.n_inputs
    return np.array([[(r >> t) & 1 for t in range(k)] for r in range(1 << k)], dtype=np.uint8)


def graph_inputs(g, reg, n, rng):
    w = reg.input_width(n)
    return [tuple(rng.randrange(2) for _ in range(w)) for _ in g.input_nodes]


def test_bsize_values():
    assert [bsize_fn(n, 1) for n in (1, 2, 3, 4, 5, 8, 9)] == [1, 2, 4, 4, 8, 8, 16]
    assert bsize_fn(4, 2) == 16
    assert bsize_fn(3, 1, {3: 64}) == 64
    with pytest.raises(ValueError):
        bsize_fn(0, 1)


def test_pad_and_circuit_to_eight():
    c = and_circuit()
    assert c.size == 4
    P = pad_family(FixedFamily(c), lambda n: 8)
    pc = materialize(P, 1)
    assert pc.size == 8
    X = inputs_for(c)
    assert eval_circuit(pc, X).tolist() == eval_circuit(c, X).tolist()


def test_pad_overflow():
    c = and_circuit()
    with pytest.raises(SizeOverflow):
        pad_family(FixedFamily(c), lambda n: 2).size(1)
    wide = small_circuit(random.Random(0), 2, 4, 3)  # 6 gates, 3 outputs
    with pytest.raises(SizeOverflow):
        pad_family(FixedFamily(wide), lambda n: 8).size(1)


def test_pad_exact_fit_is_unchanged():
    c = and_circuit()
    assert materialize(pad_family(FixedFamily(c), lambda n: 4), 1) == c


def test_block_mapping_needs_power_of_two():
    m = uniform_block_mapping(lambda n: 8)
    assert (m.bnode(1, 17), m.bstart(1, 2), m.bsize(1, 0)) == (2, 16, 8)
    with pytest.raises(NotPowerOfTwo):
        uniform_block_mapping(lambda n: 6).bnode(1, 3)


def test_block_requirement_covers_every_type():
    reg = arith_registry()
    need = block_requirement(reg, 3)
    for prim in reg.values():
        assert prim.family.size(3) + prim.family.n_outputs(3) <= need


def test_compiled_nodes_defined_exactly_below_size():
    C = compile_family(random_graph_family(5), arith_registry())
    for n in (1, 2):
        size = C.size(n)
        for i in range(-2, max(64, size + 4)):
            assert (C.node(n, i) is not None) == (0 <= i < size)


def test_node_probes_match_materialized_circuit():
    C = compile_family(random_graph_family(6), arith_registry())
    rng = random.Random(0)
    for n in (1, 2, 3):
        c = materialize(C, n)
        for _ in range(50):
            i = rng.randrange(c.size)
            assert C.node(n, i) == c.gates[i]


def test_cross_block_edges_feed_input_slots_in_order():
    reg = arith_registry()
    C = compile_family(random_graph_family(7), reg)
    n = 2
    G = C.G
    g = materialize_graph(G, n)
    b, p = C.bsize_of(n), reg.spec.p
    for jp, srcs in enumerate(g.in_edges):
        for a, ip in enumerate(srcs):
            for t in range(p):
                src = ip * b + b - p + t
                dst = jp * b + a * p + t
                assert C.edge(n, src, dst) == 0
            assert C.edge(n, ip * b + b - p, jp * b + a * p + 1) == -1


def test_accelerated_edges_match_brute_force():
    C = compile_family(random_graph_family(8, ops=(1, 3)), arith_registry())
    assert materialize(C, 2) == materialize(C, 2, brute=True)


def test_variadic_types_are_rejected():
    fam, reg = to_graph_family(toy_transformer(0, masked=True))
    with pytest.raises(UnsupportedGraph):
        compile_family(fam, reg)


def test_or_registry_compiles():
    g = ComputationGraph(["input", "input", "input", "or2", "or2"], [[], [], [], [0, 1], [3, 2]])
    C = compile_family(FixedGraphFamily(g), or_registry())
    c = materialize(C, 1)
    for r in range(8):
        bits = [(r >> t) & 1 for t in range(3)]
        assert eval_circuit(c, bits).tolist() == [int(any(bits))]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_padding_preserves_function(seed):
    rng = random.Random(seed)
    base = PerNFamily(lambda n: small_circuit(random.Random(f"{seed}:{n}"), 3, 2 + n, 2))
    P = pad_family(base, lambda n: 16)
    for n in (1, 2, 3):
        c, pc = base.circuit(n), materialize(P, n)
        assert pc.size == 16
        assert eval_circuit(pc, inputs_for(c)).tolist() == eval_circuit(c, inputs_for(c)).tolist()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 4))
def test_compiled_circuit_matches_graph(seed, n):
    reg = arith_registry()
    G = random_graph_family(seed)
    C = compile_family(G, reg)
    g, c = materialize_graph(G, n), materialize(C, n)
    rng = random.Random(seed)
    for _ in range(5):
        xs = graph_inputs(g, reg, n, rng)
        want = eval_graph(g, reg, xs, n)
        got = eval_circuit(c, [b for x in xs for b in x])
        assert tuple(got.tolist()) == want
    rep = check_bounds(C, n, c)
    assert rep["size_C"] <= rep["size_bound"] and rep["depth_C"] <= rep["depth_bound"]


def test_bound_violation_is_reported():
    C = compile_family(random_graph_family(1), arith_registry())
    c = materialize(C, 1)
    fake = Circuit(list(c.gates) + [GE(1)], list(c.in_edges) + [[c.size - 1]], 1,
                   inputs_first=False)
    # one extra gate past size_G * bsize
    with pytest.raises(BoundViolation):
        check_bounds(C, 1, fake)
    assert not check_bounds(C, 1, fake, strict=False)["size_ok"]
