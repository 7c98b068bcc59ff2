"""Ready-made primitive registries and random graph families.

``arith`` holds float ``add``, ``mul``, ``relu`` and ``identity`` at one fixed
precision, each with a synthesized full-table circuit.  ``or_tree`` is an
``n``-independent toy used to probe oracle work at large ``n``.
"""

from __future__ import annotations

import random
from functools import lru_cache

from .circuit import OR, CircuitBuilder, FixedFamily
from .graph import INPUT_TYPE, ComputationGraph, PerNGraphFamily, Primitive, PrimitiveRegistry
from .pfloat import PrecisionSpec, arith, decode, encode, relu
from .synth import TruthTable, synth_local

__all__ = ["arith_registry", "or_registry", "random_graph", "random_graph_family",
           "get_registry", "REGISTRY_NAMES", "load_graph"]


def _float_prim(name, arity, spec, fn):
    p = spec.p

    def evaluate(n, args):
        return encode(fn(*[decode(a, spec) for a in args]))

    table = TruthTable.from_function(arity * p, p, lambda bits: evaluate(
        0, [bits[a * p:(a + 1) * p] for a in range(arity)]))
    fam = FixedFamily(synth_local(table), name)
    return Primitive(name, arity, [p] * arity, p, evaluate, fam)


@lru_cache(maxsize=None)
def arith_registry(p_m: int = 2, p_e: int = 2) -> PrimitiveRegistry:
    spec = PrecisionSpec(p_m, p_e)
    prims = [
        _float_prim("add", 2, spec, lambda a, b: arith("add", a, b)),
        _float_prim("mul", 2, spec, lambda a, b: arith("mul", a, b)),
        _float_prim("relu", 1, spec, relu),
        _float_prim("identity", 1, spec, lambda a: a),
    ]
    reg = PrimitiveRegistry(prims, input_width=spec.p, name=f"arith-{p_m}-{p_e}")
    reg.spec = spec
    return reg


@lru_cache(maxsize=None)
def or_registry() -> PrimitiveRegistry:
    """One-bit values; ``or2`` is a single OR gate over two inputs."""
    b = CircuitBuilder(2)
    c = b.finish([b.add(OR, [0, 1])])
    prim = Primitive("or2", 2, [1, 1], 1, lambda n, args: (int(args[0][0] or args[1][0]),),
                     FixedFamily(c, "or2"))
    return PrimitiveRegistry([prim], input_width=1, name="or")


REGISTRY_NAMES = ("arith", "or")


def get_registry(name: str) -> PrimitiveRegistry:
    if name == "or":
        return or_registry()
    if name == "arith" or name.startswith("arith-"):
        parts = name.split("-")[1:]
        return arith_registry(*(int(x) for x in parts)) if parts else arith_registry()
    raise KeyError(f"unknown registry {name!r}; known: {', '.join(REGISTRY_NAMES)}")


def random_graph(rng: random.Random, n_inputs: int, n_ops: int,
                 types=(("add", 2), ("mul", 2), ("relu", 1)), n: int = 1) -> ComputationGraph:
    """Inputs first, then ``n_ops`` random operations; the last one is the output."""
    nodes = [INPUT_TYPE] * n_inputs
    in_edges = [[] for _ in range(n_inputs)]
    for j in range(n_inputs, n_inputs + n_ops):
        t, ar = rng.choice(types)
        while ar > j:
            t, ar = rng.choice(types)
        nodes.append(t)
        in_edges.append(rng.sample(range(j), ar))
    return ComputationGraph(nodes, in_edges, n=n)


def random_graph_family(seed: int, ops=(1, 5), types=(("add", 2), ("mul", 2), ("relu", 1))):
    """At each ``n`` a seeded random graph with ``n`` inputs."""
    def build(n):
        rng = random.Random(f"{seed}:{n}")
        return random_graph(rng, n, rng.randint(*ops), types, n)
    return PerNGraphFamily(build)


def load_graph(text: str) -> ComputationGraph:
    """Parse the ``node``/``edge`` text dump back into a graph."""
    nodes, edges, outputs = {}, [], 1
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "graph":
            fields = dict(p.split("=") for p in parts[1:])
            outputs = int(fields.get("outputs", 1))
        elif parts[0] == "node":
            nodes[int(parts[1])] = parts[2]
        elif parts[0] == "edge":
            edges.append(tuple(int(p) for p in parts[1:4]))
        else:
            raise ValueError(f"cannot parse graph line {line!r}")
    order = [nodes[i] for i in range(len(nodes))]
    slots = [dict() for _ in order]
    for s, d, a in edges:
        slots[d][a] = s
    in_edges = [[sl[a] for a in range(len(sl))] for sl in slots]
    ordered = all(s < d for s, d, _ in edges)
    return ComputationGraph(order, in_edges, n_outputs=outputs, ordered=ordered)
