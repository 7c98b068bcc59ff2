import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fomc.graph import (INPUT_TYPE, ColumnFamily, ColumnSpec, ComputationGraph, FixedGraphFamily,
                        GraphInvariantError, PerNGraphFamily, Primitive, PrimitiveRegistry,
                        UnknownNodeType, WidthMismatch, dump_graph, eval_graph, graph_stats,
                        materialize_graph)
from fomc.pfloat import PrecisionSpec, all_floats, arith, decode, encode, relu
from fomc.registries import arith_registry, load_graph, random_graph
from fomc.transformer import column_template, toy_transformer

S22 = PrecisionSpec(2, 2)


def recursive_value(g, j, inputs):
    # independent evaluator: recurse on the sources of node j
    t = g.nodes[j]
    if t == INPUT_TYPE:
        return decode(inputs[g.input_nodes.index(j)], S22)
    args = [recursive_value(g, s, inputs) for s in g.in_edges[j]]
    if t == "relu":
        return relu(args[0])
    return arith(t, *args)


def or_registry_variadic():
    bit_or = lambda n, args: (int(any(a[0] for a in args)),)  # noqa: E731
    prims = [
        Primitive("copy", 1, [1], 1, lambda n, args: args[0]),
        Primitive("any", lambda n: n + 1, lambda n: [1] * (n + 1), 1, bit_or),
        Primitive("out", 1, [1], 1, lambda n, args: args[0]),
    ]
    return PrimitiveRegistry(prims, input_width=1)


def any_column():
    K = ComputationGraph([INPUT_TYPE, "copy", "any", "out"], [[], [0], [0], [2]])
    return ColumnSpec(K, out_slots=[1], attn_layer={2: 0})


def test_eval_small_graph():
    reg = arith_registry()
    g = ComputationGraph([INPUT_TYPE, INPUT_TYPE, "add", "mul"], [[], [], [0, 1], [2, 0]])
    one = encode(decode((0, 1, 0, 0), S22))
    two = encode(decode((0, 1, 0, 1), S22))
    out = eval_graph(g, reg, [one, two])
    # 1 + 2 saturates to the largest float, 2; then 2 * 1 = 2
    assert decode(out, S22).fraction == 2


def test_graph_validation():
    with pytest.raises(GraphInvariantError):
        ComputationGraph([INPUT_TYPE, "add"], [[], [1]])
    with pytest.raises(GraphInvariantError):
        ComputationGraph([INPUT_TYPE, "add"], [[], [0, 0]])
    with pytest.raises(GraphInvariantError):
        ComputationGraph([INPUT_TYPE, "relu"], [[0], []])


def test_width_and_type_errors():
    reg = arith_registry()
    g = ComputationGraph([INPUT_TYPE, "relu"], [[], [0]])
    with pytest.raises(WidthMismatch):
        eval_graph(g, reg, [(0, 1)])
    with pytest.raises(WidthMismatch):
        eval_graph(g, reg, [])
    g = ComputationGraph([INPUT_TYPE, "nope"], [[], [0]])
    with pytest.raises(UnknownNodeType):
        eval_graph(g, reg, [(0, 0, 0, 0)])


def test_stats_and_dump_round_trip():
    g = random_graph(random.Random(2), 3, 5)
    st_ = graph_stats(g)
    assert st_["size"] == 8 and st_["depth"] >= 1
    assert load_graph(dump_graph(g)).nodes == g.nodes
    assert load_graph(dump_graph(g)).in_edges == g.in_edges


def test_per_n_family_materializes_its_graphs():
    fam = PerNGraphFamily(lambda n: random_graph(random.Random(n), n, 3, n=n))
    for n in range(1, 5):
        g = materialize_graph(fam, n)
        assert g.nodes == fam.graph(n).nodes and g.in_edges == fam.graph(n).in_edges
        assert materialize_graph(fam, n, brute=True).in_edges == g.in_edges


def test_fixed_family():
    g = random_graph(random.Random(4), 2, 2)
    fam = FixedGraphFamily(g)
    assert materialize_graph(fam, 9).nodes == g.nodes


def test_column_size():
    col = column_template(toy_transformer(0))
    fam = ColumnFamily(col)
    assert materialize_graph(fam, 3).size == 3 * col.K.size


def test_unmasked_routing_into_column_two():
    col = column_template(toy_transformer(0))
    fam = ColumnFamily(col)
    n, S = 4, col.K.size
    attn = 2 * S + next(iter(col.attn_layer))
    g = materialize_graph(fam, n)
    routed = g.in_edges[attn][:n]
    assert routed == [c * S + col.out_slots[0] for c in range(n)]
    assert [fam.edge(n, s, attn) for s in routed] == [0, 1, 2, 3]


def test_masked_routing_into_column_two():
    col = column_template(toy_transformer(0, masked=True))
    fam = ColumnFamily(col)
    n, S = 4, col.K.size
    attn = 2 * S + next(iter(col.attn_layer))
    args = sorted(a for i in range(n * S) if (a := fam.edge(n, i, attn)) >= 0)
    assert args == [0, 1, 2, 3]  # three routed reads and the column's own query
    assert [fam.edge(n, c * S + col.out_slots[0], attn) for c in range(n)] == [0, 1, 2, -1]


def test_transformer_column_depth():
    fam = ColumnFamily(column_template(toy_transformer(0)))
    # input, embed, query, attention, activation, classify
    assert graph_stats(materialize_graph(fam, 2))["depth"] == 5


def test_column_accelerator_matches_brute_force():
    for masked in (False, True):
        fam = ColumnFamily(column_template(toy_transformer(0, d=2, masked=masked)))
        for n in (1, 2, 3):
            assert materialize_graph(fam, n).in_edges == materialize_graph(fam, n, brute=True).in_edges


def test_column_routing_evaluates_or_of_all_positions():
    fam = ColumnFamily(any_column())
    reg = or_registry_variadic()
    for n in range(1, 6):
        g = materialize_graph(fam, n)
        for x in itertools.product((0, 1), repeat=n):
            assert eval_graph(g, reg, [(b,) for b in x], n) == (int(any(x)),)


def test_column_validation():
    K = ComputationGraph([INPUT_TYPE, "copy"], [[], [0]])
    with pytest.raises(GraphInvariantError):
        ColumnSpec(K, out_slots=[5])
    with pytest.raises(GraphInvariantError):
        ColumnSpec(K, out_slots=[0], attn_layer={1: 0})


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_eval_matches_recursive_evaluator(seed):
    rng = random.Random(seed)
    g = random_graph(rng, 2, 4, types=(("add", 2), ("mul", 2)))
    fs = all_floats(S22)
    for _ in range(5):
        xs = [encode(rng.choice(fs)) for _ in g.input_nodes]
        out = eval_graph(g, arith_registry(), xs)
        assert decode(out, S22) == recursive_value(g, g.size - 1, xs)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_random_graphs_are_ordered_dags(seed):
    g = random_graph(random.Random(seed), 3, 6)
    assert all(s < j for j, srcs in enumerate(g.in_edges) for s in srcs)
    assert g.input_nodes == [0, 1, 2]
