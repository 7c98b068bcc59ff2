"""Computation graphs over bitstrings, graph families, and column-uniform families.

A node's type names a primitive in a ``PrimitiveRegistry``; the special type
``input`` marks graph inputs, taken in index order.  Values are tuples of
bits; decoding to floats is the registry's business.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .circuit import CircuitFamily, WorkCounter, topo_order

__all__ = [
    "INPUT_TYPE", "GraphError", "WidthMismatch", "UnknownNodeType", "GraphInvariantError",
    "Primitive", "PrimitiveRegistry", "ComputationGraph", "eval_graph", "graph_stats",
    "GraphFamily", "FixedGraphFamily", "PerNGraphFamily", "materialize_graph",
    "ColumnSpec", "ColumnFamily", "column_family", "dump_graph",
]

INPUT_TYPE = "input"


class GraphError(ValueError):
    pass


class WidthMismatch(GraphError):
    pass


class UnknownNodeType(GraphError, KeyError):
    pass


class GraphInvariantError(GraphError):
    pass


def _const(v):
    return v if callable(v) else (lambda n: v)


@dataclass
class Primitive:
    """A node type: widths as functions of ``n``, a reference evaluator, a circuit family.

    ``fn(n, args)`` maps the list of argument bit tuples to the output tuple.
    The circuit family reads the arguments concatenated in order.  A
    ``variadic`` primitive takes a length-dependent number of arguments and
    its ``in_widths(n, count)`` gets the count too; such types have no
    single circuit per ``n`` and cannot be compiled.
    """

    name: str
    arity: Callable[[int], int]
    in_widths: Callable[[int], Sequence[int]]
    out_width: Callable[[int], int]
    fn: Callable[[int, list], tuple]
    family: CircuitFamily | None = None
    variadic: bool = False

    def __post_init__(self):
        self.arity = _const(self.arity)
        if not callable(self.in_widths):
            self.in_widths = _const(self.in_widths)
        self.out_width = _const(self.out_width)


class PrimitiveRegistry(dict):
    """Node type name to Primitive, plus the bit width of ``input`` nodes."""

    def __init__(self, prims: Sequence[Primitive] = (), input_width=1, name: str = ""):
        super().__init__((p.name, p) for p in prims)
        self.input_width = _const(input_width)
        self.name = name

    def __missing__(self, key):
        raise UnknownNodeType(key)

    def out_width(self, t: str, n: int) -> int:
        return self.input_width(n) if t == INPUT_TYPE else self[t].out_width(n)

    def in_widths(self, t: str, n: int) -> list[int]:
        return [] if t == INPUT_TYPE else list(self[t].in_widths(n))


@dataclass
class ComputationGraph:
    """Node types with argument-ordered in-edges; the output is the last ``n_outputs`` nodes."""

    nodes: list
    in_edges: list
    n_outputs: int = 1
    ordered: bool = True
    n: int = 1

    def __post_init__(self):
        self.nodes = list(self.nodes)
        self.in_edges = [list(e) for e in self.in_edges]
        self.validate()

    def validate(self):
        if len(self.nodes) != len(self.in_edges):
            raise GraphInvariantError("one in-edge list per node is required")
        for j, srcs in enumerate(self.in_edges):
            if self.nodes[j] == INPUT_TYPE and srcs:
                raise GraphInvariantError(f"input node {j} has in-edges")
            if len(set(srcs)) != len(srcs):
                raise GraphInvariantError(f"node {j} reads the same node twice")
            for s in srcs:
                if not 0 <= s < len(self.nodes) or (self.ordered and s >= j):
                    raise GraphInvariantError(f"edge {s}->{j} violates the index order")
        if not 1 <= self.n_outputs <= len(self.nodes):
            raise GraphInvariantError("bad output count")
        if not self.ordered:
            topo_order(self.in_edges)

    @property
    def size(self):
        return len(self.nodes)

    @property
    def input_nodes(self):
        return [i for i, t in enumerate(self.nodes) if t == INPUT_TYPE]

    def order(self):
        return range(self.size) if self.ordered else topo_order(self.in_edges)


def eval_graph(g: ComputationGraph, registry: PrimitiveRegistry, inputs: Sequence[Sequence[int]],
               n: int | None = None, trace: Callable | None = None):
    """Value of the output node (or list of values when there are several).

    ``trace(j, type, args, out)`` is called after each non-input node.
    """
    n = g.n if n is None else n
    ins = g.input_nodes
    if len(inputs) != len(ins):
        raise WidthMismatch(f"graph has {len(ins)} inputs, got {len(inputs)}")
    vals = [None] * g.size
    for i, x in zip(ins, inputs):
        x = tuple(int(b) for b in x)
        if len(x) != registry.input_width(n):
            raise WidthMismatch(f"input {i} has {len(x)} bits, expected {registry.input_width(n)}")
        vals[i] = x
    for j in g.order():
        t = g.nodes[j]
        if t == INPUT_TYPE:
            continue
        prim = registry[t]
        args = [vals[s] for s in g.in_edges[j]]
        if prim.variadic:
            widths = list(prim.in_widths(n, len(args)))
        else:
            widths = list(prim.in_widths(n))
        if len(args) != len(widths) or [len(a) for a in args] != widths:
            raise WidthMismatch(f"node {j} ({t}) got widths {[len(a) for a in args]}, expected {widths}")
        out = tuple(prim.fn(n, args))
        if len(out) != prim.out_width(n):
            raise WidthMismatch(f"primitive {t} returned {len(out)} bits")
        vals[j] = out
        if trace is not None:
            trace(j, t, args, out)
    outs = vals[g.size - g.n_outputs:]
    return outs[0] if g.n_outputs == 1 else outs


def graph_stats(g: ComputationGraph) -> dict:
    depth = [0] * g.size
    for j in g.order():
        if g.in_edges[j]:
            depth[j] = 1 + max(depth[s] for s in g.in_edges[j])
    return {"size": g.size, "depth": max(depth) if depth else 0,
            "arity": [len(e) for e in g.in_edges]}


def dump_graph(g: ComputationGraph) -> str:
    lines = [f"graph size={g.size} outputs={g.n_outputs}"]
    lines += [f"node {i} {t}" for i, t in enumerate(g.nodes)]
    lines += [f"edge {s} {j} {a}" for j, srcs in enumerate(g.in_edges) for a, s in enumerate(srcs)]
    return "\n".join(lines) + "\n"


# -- families -----------------------------------------------------------------------

class GraphFamily:
    """Oracles ``node(n, i)`` (type name or None) and ``edge(n, i, j)`` (argument or -1)."""

    ordered = True
    n_outputs = 1

    def __init__(self):
        self.work = WorkCounter()

    def node(self, n, i):
        raise NotImplementedError

    def edge(self, n, i, j):
        raise NotImplementedError

    def size(self, n):
        raise NotImplementedError

    def in_edges(self, n, j):
        """Optional ``[(src, arg)]`` listing used to avoid probing every pair."""
        return None

    def depth(self, n):
        return graph_stats(materialize_graph(self, n))["depth"]


class PerNGraphFamily(GraphFamily):
    """A family backed by an explicit graph per ``n``."""

    def __init__(self, build):
        super().__init__()
        self._build = build
        self._cache = {}

    def graph(self, n):
        g = self._cache.get(n)
        if g is None:
            g = self._cache[n] = self._build(n)
            self.ordered = self.ordered and g.ordered
        return g

    def node(self, n, i):
        g = self.graph(n)
        return g.nodes[i] if 0 <= i < g.size else None

    def edge(self, n, i, j):
        g = self.graph(n)
        if not 0 <= j < g.size:
            return -1
        srcs = g.in_edges[j]
        return srcs.index(i) if i in srcs else -1

    def in_edges(self, n, j):
        return [(s, a) for a, s in enumerate(self.graph(n).in_edges[j])]

    def size(self, n):
        return self.graph(n).size

    def depth(self, n):
        return graph_stats(self.graph(n))["depth"]


class FixedGraphFamily(PerNGraphFamily):
    def __init__(self, g: ComputationGraph):
        super().__init__(lambda n: g)
        self.n_outputs = g.n_outputs
        self.ordered = g.ordered


def materialize_graph(fam: GraphFamily, n: int, brute: bool = False) -> ComputationGraph:
    size = fam.size(n)
    if fam.node(n, size) is not None:
        raise GraphInvariantError(f"node({n}, {size}) is defined past size {size}")
    nodes = []
    for i in range(size):
        t = fam.node(n, i)
        if t is None:
            raise GraphInvariantError(f"node({n}, {i}) is empty below size {size}")
        nodes.append(t)
    in_edges = []
    for j in range(size):
        listed = None if brute else fam.in_edges(n, j)
        if listed is None:
            listed = [(i, fam.edge(n, i, j)) for i in range(size)]
        slots = {}
        for i, a in listed:
            if a < 0:
                continue
            if not 0 <= i < size:
                raise GraphInvariantError(f"edge from missing node {i}")
            if a in slots:
                raise GraphInvariantError(f"node {j} has argument {a} twice")
            slots[a] = i
        if sorted(slots) != list(range(len(slots))):
            raise GraphInvariantError(f"node {j} arguments {sorted(slots)} are not 0..{len(slots) - 1}")
        in_edges.append([slots[a] for a in range(len(slots))])
    return ComputationGraph(nodes, in_edges, n_outputs=fam.n_outputs, ordered=fam.ordered, n=n)


# -- column uniformity ----------------------------------------------------------------

@dataclass
class ColumnSpec:
    """A fixed column graph ``K`` repeated once per position.

    ``out_slots[l]`` is the slot of the layer-``l`` output; ``attn_layer`` maps
    each attention slot to the ``l`` whose outputs it reads from every
    position.  Those reads are not edges of ``K``: they are generated by the
    family with the source position as argument index, ahead of the
    attention node's own in-column arguments.
    """

    K: ComputationGraph
    out_slots: Sequence[int]
    attn_layer: dict = field(default_factory=dict)
    masked: bool = False

    def __post_init__(self):
        S = self.K.size
        for s in list(self.out_slots) + list(self.attn_layer):
            if not 0 <= s < S:
                raise GraphInvariantError(f"slot {s} outside the column of size {S}")
        for a, lv in self.attn_layer.items():
            if not 0 <= lv < len(self.out_slots):
                raise GraphInvariantError(f"attention slot {a} reads missing layer {lv}")
            if self.out_slots[lv] in self.K.in_edges[a]:
                raise GraphInvariantError("routed reads must not also be column edges")


class ColumnFamily(GraphFamily):
    """Graph family ``node(n, i) = K[i mod S]`` with attention routing between columns.

    The graph output is the final node, the last slot of the last column;
    the copies of that slot in earlier columns are computed but unused.
    """

    ordered = False

    def __init__(self, col: ColumnSpec):
        super().__init__()
        self.col = col
        self.S = col.K.size
        self._kargs = [{s: a for a, s in enumerate(srcs)} for srcs in col.K.in_edges]

    def _split(self, i):
        q, r = divmod(i, self.S)
        self.work.charge(i, self.S, q, r)
        return q, r

    def size(self, n):
        self.work.charge(n, self.S)
        return n * self.S

    def node(self, n, i):
        if i < 0 or i >= self.size(n):
            return None
        return self.col.K.nodes[self._split(i)[1]]

    def edge(self, n, i, j):
        size = self.size(n)
        if not (0 <= i < size and 0 <= j < size):
            return -1
        ci, si = self._split(i)
        cj, sj = self._split(j)
        lv = self.col.attn_layer.get(sj)
        if lv is not None and si == self.col.out_slots[lv]:
            self.work.charge(ci, cj)
            if self.col.masked and ci > cj:
                return -1
            return ci
        if ci != cj:
            return -1
        a = self._kargs[sj].get(si, -1)
        if a >= 0 and lv is not None:
            # in-column arguments follow the routed ones
            routed = cj + 1 if self.col.masked else n
            self.work.charge(a, routed)
            a += routed
        return a

    def in_edges(self, n, j):
        size = self.size(n)
        if not 0 <= j < size:
            return []
        cj, sj = self._split(j)
        base = cj * self.S
        lv = self.col.attn_layer.get(sj)
        out = []
        if lv is not None:
            src = self.col.out_slots[lv]
            cols = range(cj + 1) if self.col.masked else range(n)
            out = [(c * self.S + src, c) for c in cols]
        shift = len(out)
        out += [(base + s, a + shift) for a, s in enumerate(self.col.K.in_edges[sj])]
        return out


def column_family(col: ColumnSpec) -> ColumnFamily:
    return ColumnFamily(col)
