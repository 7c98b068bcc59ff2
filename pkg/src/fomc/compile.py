"""Compile a graph family plus per-node-type circuit families into one circuit family.

Every graph node gets a block of ``bsize(n)`` gates.  A block simulating a
primitive holds that primitive's padded circuit with its input gates turned
into identity gates; an ``input`` node's block ends with its primary input
gates.  The last ``w`` gates of each block carry the node's ``w``-bit value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .circuit import GE, IDENTITY, INPUT, Circuit, CircuitFamily, WorkCounter, materialize
from .graph import INPUT_TYPE, GraphFamily, PrimitiveRegistry, WidthMismatch, materialize_graph, graph_stats

__all__ = [
    "SizeOverflow", "NotPowerOfTwo", "BoundViolation", "UnsupportedGraph",
    "bsize_fn", "PaddedFamily", "pad_family", "BlockMapping", "uniform_block_mapping",
    "CompiledFamily", "compile_family", "check_bounds", "block_requirement",
    "SMALL_N",
]

SMALL_N = 16


class SizeOverflow(ValueError):
    pass


class NotPowerOfTwo(ValueError):
    pass


class BoundViolation(AssertionError):
    pass


class UnsupportedGraph(ValueError):
    pass


def _clog2(n: int) -> int:
    return (n - 1).bit_length() if n > 1 else 0


def bsize_fn(n: int, k: int, override: dict | None = None) -> int:
    """``2**(k * ceil(log2 n))``, raised by ``override[n]`` where that is larger."""
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 and k >= 1")
    b = 1 << (k * _clog2(n))
    if override and n in override:
        b = max(b, override[n])
    return b


def _is_pow2(b: int) -> bool:
    return b >= 1 and b & (b - 1) == 0


class PaddedFamily(CircuitFamily):
    """``F`` extended with identity gates to exactly ``bsize(n)`` gates.

    The final ``p`` gates copy ``F``'s outputs; they find them through the
    output predicate ``node(i + p - k - 1) is not None and node(i + p - k) is None``
    rather than by reading ``size_F(n)``.
    """

    def __init__(self, F: CircuitFamily, bsize: Callable[[int], int]):
        super().__init__()
        self.F = F
        self.bsize = bsize
        self.inputs_first = F.inputs_first
        self.ordered = F.ordered

    def _check(self, n):
        size, b, p = self.F.size(n), self.bsize(n), self.F.n_outputs(n)
        if size > b:
            raise SizeOverflow(f"family has {size} gates but the block holds {b}")
        if 0 < b - size < p:
            # the copied outputs would overlap the original output block
            raise SizeOverflow(f"padding {b - size} gates cannot relocate {p} outputs")
        return size, b, p

    def size(self, n):
        self._check(n)
        return self.bsize(n)

    def n_outputs(self, n):
        return self.F.n_outputs(n)

    def n_inputs(self, n):
        return self.F.n_inputs(n)

    def node(self, n, i):
        b = self.bsize(n)
        if not 0 <= i < b:
            return None
        g = self.F.node(n, i)
        return g if g is not None else IDENTITY

    def _source_of(self, n, i, j):
        # argument index of the copy edge i -> j into the padded tail, else -1
        b, p = self.bsize(n), self.F.n_outputs(n)
        kj = p - (b - j)
        if kj < 0 or self.F.node(n, j) is not None:
            return -1
        if self.F.node(n, i + p - kj - 1) is not None and self.F.node(n, i + p - kj) is None:
            return 0
        return -1

    def edge(self, n, i, j):
        b = self.bsize(n)
        if not (0 <= i < b and 0 <= j < b):
            return -1
        if self.F.node(n, j) is not None:
            return self.F.edge(n, i, j) if self.F.node(n, i) is not None else -1
        return self._source_of(n, i, j)

    def in_edges(self, n, j):
        size, b, p = self._check(n)
        if j < size:
            listed = self.F.in_edges(n, j)
            if listed is None:
                scan = range(j) if self.F.ordered else range(size)
                listed = [(i, a) for i in scan if (a := self.F.edge(n, i, j)) >= 0]
            return listed
        kj = p - (b - j)
        return [(size - p + kj, 0)] if kj >= 0 else []

    def depth(self, n):
        c = materialize(self, n)
        return c.depth()


def pad_family(F: CircuitFamily, bsize: Callable[[int], int]) -> PaddedFamily:
    return PaddedFamily(F, bsize)


@dataclass
class BlockMapping:
    bnode: Callable[[int, int], int]
    bstart: Callable[[int, int], int]
    bsize: Callable[[int, int], int]


def uniform_block_mapping(bsize: Callable[[int], int], work: WorkCounter | None = None) -> BlockMapping:
    """Blocks of equal power-of-two size, located by shifts."""
    work = work or WorkCounter()

    def shift(n):
        b = bsize(n)
        if not _is_pow2(b):
            raise NotPowerOfTwo(f"bsize({n}) = {b}")
        return b.bit_length() - 1

    def bnode(n, i):
        s = shift(n)
        work.charge(i, s)
        return i >> s

    def bstart(n, ip):
        s = shift(n)
        work.charge(ip, s)
        return ip << s

    def bsz(n, ip):
        return 1 << shift(n)

    return BlockMapping(bnode, bstart, bsz)


class CompiledFamily(CircuitFamily):
    """Circuit family built from one padded block per graph node, wired by the graph's edges.

    Argument ``a`` of a block begins at the sum of the widths of arguments
    ``0..a-1``; with equal widths ``p`` that is ``p * a``.
    """

    inputs_first = False

    def __init__(self, G: GraphFamily, registry: PrimitiveRegistry, bsize: Callable[[int], int]):
        super().__init__()
        self.G = G
        self.registry = registry
        self.ordered = G.ordered
        self.bsize_of = bsize
        self.mapping = uniform_block_mapping(bsize, self.work)
        self.padded = {t: pad_family(prim.family, bsize) for t, prim in registry.items()}

    # -- helpers on node types
    def _width(self, n, t):
        return self.registry.out_width(t, n)

    def _offset(self, n, t, a):
        ws = self.registry.in_widths(t, n)
        self.work.charge(a)
        return sum(ws[:a])

    def size(self, n):
        s = self.G.size(n) * self.bsize_of(n)
        self.work.charge(s)
        return s

    def n_outputs(self, n):
        return self._width(n, self.G.node(n, self.G.size(n) - 1))

    def node(self, n, i):
        """Gate type at index i: the block owner's padded gate, or an input or filler."""
        if i < 0:
            return None
        ip = self.mapping.bnode(n, i)
        t = self.G.node(n, ip)
        if t is None:
            return None
        off = i - self.mapping.bstart(n, ip)
        self.work.charge(off)
        if t == INPUT_TYPE:
            b, w = self.bsize_of(n), self._width(n, t)
            if w > b:
                raise SizeOverflow(f"input width {w} exceeds block size {b}")
            # constant-zero fillers, then the primary inputs at the block's end
            return INPUT if off >= b - w else GE(1)
        g = self.padded[t].node(n, off)
        return IDENTITY if g.kind == "INPUT" else g

    def edge(self, n, i, j):
        """Argument index of i in j: inside a block, or output bit to input slot across blocks."""
        if i < 0 or j < 0:
            return -1
        ip, jp = self.mapping.bnode(n, i), self.mapping.bnode(n, j)
        ti, tj = self.G.node(n, ip), self.G.node(n, jp)
        if ti is None or tj is None:
            return -1
        si, sj = self.mapping.bstart(n, ip), self.mapping.bstart(n, jp)
        if ip == jp:
            if tj == INPUT_TYPE:
                return -1
            return self.padded[tj].edge(n, i - si, j - sj)
        a = self.G.edge(n, ip, jp)
        if a < 0 or tj == INPUT_TYPE:
            return -1
        wi = self._width(n, ti)
        b_i = i - (si + self.bsize_of(n) - wi)
        b_j = j - (sj + self._offset(n, tj, a))
        self.work.charge(b_i, b_j, wi)
        if b_i == b_j and 0 <= b_i < wi:
            # the receiving gate is an identity, so its only argument is 0
            return 0
        return -1

    def in_edges(self, n, j):
        jp = self.mapping.bnode(n, j)
        tj = self.G.node(n, jp)
        if tj is None or tj == INPUT_TYPE:
            return []
        sj = self.mapping.bstart(n, jp)
        off = j - sj
        fam = self.padded[tj]
        if fam.node(n, off).kind != "INPUT":
            return [(sj + s, a) for s, a in fam.in_edges(n, off)]
        ws = self.registry.in_widths(tj, n)
        a, start = 0, 0
        while off >= start + ws[a]:
            start += ws[a]
            a += 1
        listed = self.G.in_edges(n, jp)
        if listed is None:
            listed = [(ip, self.G.edge(n, ip, jp)) for ip in range(self.G.size(n))]
        ip = next(s for s, arg in listed if arg == a)
        ti = self.G.node(n, ip)
        if self._width(n, ti) != ws[a]:
            raise WidthMismatch(f"argument {a} of node {jp} expects {ws[a]} bits")
        src = self.mapping.bstart(n, ip) + self.bsize_of(n) - self._width(n, ti) + (off - start)
        return [(src, 0)]


def block_requirement(registry: PrimitiveRegistry, n: int) -> int:
    """Fewest gates per block that lets every node type pad to a power of two."""
    need = registry.input_width(n)
    for prim in registry.values():
        size, p = prim.family.size(n), prim.family.n_outputs(n)
        need = max(need, size + p)
    return need


def _next_pow2(v: int) -> int:
    return 1 << _clog2(v)


def compile_family(G: GraphFamily, registry: PrimitiveRegistry, k: int = 1,
                   small_n: int = SMALL_N) -> CompiledFamily:
    """Pad every node type to ``bsize_fn(n, k)`` and wire the blocks together.

    For ``n <= small_n`` the block size is raised, where needed, to the
    smallest power of two that fits every registry circuit.
    """
    for t, prim in registry.items():
        if prim.family is None or prim.variadic:
            raise UnsupportedGraph(f"node type {t} has no single circuit per length")
    override = {}

    def bsize(n):
        if n <= small_n and n not in override:
            override[n] = _next_pow2(block_requirement(registry, n))
        return bsize_fn(n, k, override)

    return CompiledFamily(G, registry, bsize)


def check_bounds(compiled: CompiledFamily, n: int, circuit: Circuit | None = None,
                 strict: bool = True) -> dict:
    """Measure the compiled circuit at ``n`` against the size and depth bounds.

    A block's depth counts its identity input layer, so each primitive
    contributes its padded depth plus one.  With ``strict`` a failed bound
    raises ``BoundViolation``; otherwise the report shows it.
    """
    c = circuit if circuit is not None else materialize(compiled, n)
    g = materialize_graph(compiled.G, n)
    stats = graph_stats(g)
    used = sorted(set(t for t in g.nodes if t != INPUT_TYPE))
    depth_F = max([compiled.padded[t].depth(n) + 1 for t in used], default=0)
    size_F = max([compiled.padded[t].size(n) for t in used] + [compiled.bsize_of(n)])
    rep = {
        "n": n, "size_C": c.size, "depth_C": c.depth(),
        "size_G": stats["size"], "depth_G": stats["depth"],
        "max_size_F": size_F, "max_depth_F": depth_F,
    }
    rep["size_bound"] = rep["size_G"] * size_F
    rep["depth_bound"] = rep["depth_G"] * depth_F
    rep["size_ok"] = rep["size_C"] <= rep["size_bound"]
    rep["depth_ok"] = rep["depth_C"] <= rep["depth_bound"]
    if strict and not (rep["size_ok"] and rep["depth_ok"]):
        raise BoundViolation(str(rep))
    return rep
