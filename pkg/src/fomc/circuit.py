"""Threshold circuits and circuit families given by node/edge oracles.

A gate is ``INPUT``, ``GE d`` (fires when at least ``d`` inputs are 1) or
``LE d`` (fires when at most ``d`` inputs are 1).  Edges always run from a
lower gate index to a higher one and the outputs are the last ``kprime``
gates.  Evaluation is batched: inputs may be a single bit vector or a
``(batch, k)`` array.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from scipy import sparse

__all__ = [
    "GateType", "INPUT", "GE", "LE", "AND", "OR", "NOT", "IDENTITY",
    "CircuitError", "CycleOrOrderViolation", "BadOutputBlock", "DuplicateArgIndex",
    "InputBlockViolation", "ArityMismatch", "FamilyInvariantError",
    "Circuit", "eval_circuit", "validate", "circuit_depth", "topo_order",
    "WorkCounter", "CircuitFamily", "FixedFamily", "PerNFamily", "materialize",
    "eval_family", "dump_circuit", "load_circuit", "CircuitBuilder",
]


class GateType(NamedTuple):
    kind: str  # "INPUT", "GE" or "LE"
    delta: int = 0

    def __str__(self):
        return "INPUT" if self.kind == "INPUT" else f"{self.kind} {self.delta}"


INPUT = GateType("INPUT")


def GE(delta: int) -> GateType:
    if delta < 0:
        raise ValueError("threshold must be nonnegative")
    return GateType("GE", delta)


def LE(delta: int) -> GateType:
    if delta < 0:
        raise ValueError("threshold must be nonnegative")
    return GateType("LE", delta)


def AND(arity: int) -> GateType:
    return GE(arity)


OR = GE(1)
NOT = LE(0)
IDENTITY = GE(1)


class CircuitError(ValueError):
    pass


class CycleOrOrderViolation(CircuitError):
    pass


class BadOutputBlock(CircuitError):
    pass


class DuplicateArgIndex(CircuitError):
    pass


class InputBlockViolation(CircuitError):
    pass


class ArityMismatch(CircuitError):
    pass


class FamilyInvariantError(CircuitError):
    pass


class Circuit:
    """Gates plus, per gate, its sources in argument order.

    ``inputs_first`` enforces that inputs occupy gates ``0..k-1``.  Compiled
    circuits interleave input blocks with other blocks and pass ``False``;
    their primary inputs are then the ``INPUT`` gates in index order.
    ``ordered`` enforces edges from lower to higher index; with ``False`` any
    acyclic wiring is accepted and evaluation follows a topological order.
    """

    def __init__(self, gates: Sequence[GateType], in_edges: Sequence[Sequence[int]],
                 n_outputs: int, inputs_first: bool = True, ordered: bool = True,
                 check: bool = True):
        self.gates = tuple(GateType(*g) for g in gates)
        self.in_edges = tuple(tuple(int(s) for s in srcs) for srcs in in_edges)
        self.n_outputs = int(n_outputs)
        self.inputs_first = inputs_first
        self.ordered = ordered
        self._plan = None
        self._depths = None
        if check:
            validate(self)

    @classmethod
    def from_edges(cls, gates, edges, n_outputs, **kw) -> "Circuit":
        """Build from ``(src, dst, arg)`` triples; argument indices must be ``0..arity-1``."""
        slots = [dict() for _ in gates]
        for src, dst, arg in edges:
            if not 0 <= dst < len(gates) or not 0 <= src < len(gates):
                raise CycleOrOrderViolation(f"edge {src}->{dst} leaves the circuit")
            if arg in slots[dst]:
                raise DuplicateArgIndex(f"gate {dst} has argument {arg} twice")
            slots[dst][arg] = src
        in_edges = []
        for j, sl in enumerate(slots):
            if sorted(sl) != list(range(len(sl))):
                raise DuplicateArgIndex(f"gate {j} argument indices {sorted(sl)} are not 0..{len(sl) - 1}")
            in_edges.append([sl[a] for a in range(len(sl))])
        return cls(gates, in_edges, n_outputs, **kw)

    @property
    def size(self) -> int:
        return len(self.gates)

    @property
    def input_indices(self) -> list[int]:
        return [i for i, g in enumerate(self.gates) if g.kind == "INPUT"]

    @property
    def n_inputs(self) -> int:
        return len(self.input_indices)

    @property
    def output_indices(self) -> list[int]:
        return list(range(self.size - self.n_outputs, self.size))

    @property
    def n_internal(self) -> int:
        """Number of non-input gates."""
        return self.size - self.n_inputs

    def edges(self):
        for j, srcs in enumerate(self.in_edges):
            for a, s in enumerate(srcs):
                yield s, j, a

    def depth(self) -> int:
        return circuit_depth(self)

    def __eq__(self, other):
        return (isinstance(other, Circuit) and self.gates == other.gates
                and self.in_edges == other.in_edges and self.n_outputs == other.n_outputs)

    def __repr__(self):
        return f"Circuit(size={self.size}, k={self.n_inputs}, kprime={self.n_outputs})"


def validate(c: Circuit) -> None:
    if len(c.in_edges) != len(c.gates):
        raise CircuitError("one in-edge list per gate is required")
    seen_internal = False
    for j, (g, srcs) in enumerate(zip(c.gates, c.in_edges)):
        if g.kind not in ("INPUT", "GE", "LE") or g.delta < 0:
            raise CircuitError(f"gate {j} has bad type {g!r}")
        if g.kind == "INPUT":
            if srcs:
                raise CircuitError(f"input gate {j} has in-edges")
            if c.inputs_first and seen_internal:
                raise InputBlockViolation(f"input gate {j} follows a non-input gate")
        else:
            seen_internal = True
        if len(set(srcs)) != len(srcs):
            raise DuplicateArgIndex(f"gate {j} reads the same source twice")
        for s in srcs:
            if c.ordered and not 0 <= s < j:
                raise CycleOrOrderViolation(f"edge {s}->{j} does not go to a higher index")
            if not 0 <= s < len(c.gates):
                raise CycleOrOrderViolation(f"edge {s}->{j} leaves the circuit")
    if not 1 <= c.n_outputs <= len(c.gates):
        raise BadOutputBlock(f"kprime={c.n_outputs} with {len(c.gates)} gates")
    if not c.ordered:
        topo_order(c.in_edges)


def topo_order(in_edges: Sequence[Sequence[int]]) -> list[int]:
    """Kahn order of a DAG given per-node source lists; raises on a cycle."""
    n = len(in_edges)
    indeg = [len(srcs) for srcs in in_edges]
    outs = [[] for _ in range(n)]
    for j, srcs in enumerate(in_edges):
        for s in srcs:
            outs[s].append(j)
    ready = [j for j in range(n) if indeg[j] == 0]
    order = []
    while ready:
        j = ready.pop()
        order.append(j)
        for t in outs[j]:
            indeg[t] -= 1
            if indeg[t] == 0:
                ready.append(t)
    if len(order) != n:
        raise CycleOrOrderViolation("the wiring has a cycle")
    return order


def circuit_depth(c: Circuit) -> int:
    """Longest path, counted in edges."""
    if c._depths is None:
        d = np.zeros(c.size, dtype=np.int64)
        order = range(c.size) if c.ordered else topo_order(c.in_edges)
        for j in order:
            srcs = c.in_edges[j]
            if srcs:
                d[j] = 1 + max(d[s] for s in srcs)
        c._depths = d
    return int(c._depths.max()) if c.size else 0


def _plan(c: Circuit):
    """Group gates into levels; each level is evaluated by one sparse product."""
    if c._plan is None:
        circuit_depth(c)
        levels = []
        depths = c._depths
        for lv in range(1, int(depths.max()) + 1 if c.size else 1):
            idx = np.nonzero(depths == lv)[0]
            rows, cols = [], []
            for r, j in enumerate(idx):
                rows.extend([r] * len(c.in_edges[j]))
                cols.extend(c.in_edges[j])
            mat = sparse.csr_matrix((np.ones(len(rows), dtype=np.int32), (rows, cols)),
                                    shape=(len(idx), c.size))
            kinds = np.array([c.gates[j].kind == "GE" for j in idx])
            deltas = np.array([c.gates[j].delta for j in idx], dtype=np.int64)
            levels.append((idx, mat, kinds, deltas))
        # depth-0 gates with no sources are constants: GE 0 and LE d are 1, GE d>0 is 0
        consts = [(j, int((g.kind == "GE" and g.delta == 0) or g.kind == "LE"))
                  for j, g in enumerate(c.gates) if g.kind != "INPUT" and not c.in_edges[j]]
        c._plan = (consts, levels)
    return c._plan


def eval_circuit(c: Circuit, x) -> np.ndarray:
    """Output bits; ``x`` of shape ``(k,)`` gives ``(kprime,)``, ``(B, k)`` gives ``(B, kprime)``."""
    x = np.asarray(x, dtype=np.int8)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    inputs = c.input_indices
    if x.shape[1] != len(inputs):
        raise ArityMismatch(f"circuit has {len(inputs)} inputs, got {x.shape[1]} bits")
    if np.any((x != 0) & (x != 1)):
        raise ValueError("inputs must be bits")
    consts, levels = _plan(c)
    vals = np.zeros((c.size, x.shape[0]), dtype=np.int32)
    vals[inputs, :] = x.T
    for j, v in consts:
        vals[j, :] = v
    for idx, mat, kinds, deltas in levels:
        s = mat @ vals
        ge = s >= deltas[:, None]
        le = s <= deltas[:, None]
        vals[idx, :] = np.where(kinds[:, None], ge, le)
    out = vals[c.output_indices, :].T.astype(np.uint8)
    return out[0] if single else out


# -- families ---------------------------------------------------------------------

class WorkCounter:
    """Charges the bit-length of every integer an oracle operates on."""

    def __init__(self):
        self.total = 0

    def charge(self, *values: int) -> None:
        for v in values:
            self.total += max(1, abs(int(v)).bit_length())

    def reset(self) -> int:
        t, self.total = self.total, 0
        return t


class CircuitFamily:
    """Oracles ``node(n, i)`` and ``edge(n, i, j)`` describing one circuit per ``n``.

    Subclasses may override ``in_edges(n, j)`` to list ``(src, arg)`` pairs
    directly; materialization falls back to probing every pair otherwise.
    ``inputs_first`` says whether materialized circuits keep inputs in front.
    """

    inputs_first = True
    ordered = True

    def __init__(self):
        self.work = WorkCounter()

    def node(self, n: int, i: int) -> GateType | None:
        raise NotImplementedError

    def edge(self, n: int, i: int, j: int) -> int:
        raise NotImplementedError

    def size(self, n: int) -> int:
        raise NotImplementedError

    def n_inputs(self, n: int) -> int:
        return sum(self.node(n, i).kind == "INPUT" for i in range(self.size(n)))

    def n_outputs(self, n: int) -> int:
        raise NotImplementedError

    def in_edges(self, n: int, j: int):
        return None


class PerNFamily(CircuitFamily):
    """Family backed by an explicit circuit per ``n``, built on demand and cached."""

    def __init__(self, build, name: str = ""):
        super().__init__()
        self._build = build
        self._cache = {}
        self._arg = {}
        self.name = name

    def circuit(self, n: int) -> Circuit:
        c = self._cache.get(n)
        if c is None:
            c = self._cache[n] = self._build(n)
        return c

    def _args(self, n):
        got = self._arg.get(n)
        if got is None:
            c = self.circuit(n)
            got = self._arg[n] = [{s: a for a, s in enumerate(srcs)} for srcs in c.in_edges]
        return got

    def node(self, n, i):
        c = self.circuit(n)
        return c.gates[i] if 0 <= i < c.size else None

    def edge(self, n, i, j):
        c = self.circuit(n)
        if not (0 <= j < c.size):
            return -1
        return self._args(n)[j].get(i, -1)

    def in_edges(self, n, j):
        return [(s, a) for a, s in enumerate(self.circuit(n).in_edges[j])]

    def size(self, n):
        return self.circuit(n).size

    def n_inputs(self, n):
        return self.circuit(n).n_inputs

    def n_outputs(self, n):
        return self.circuit(n).n_outputs

    def depth(self, n):
        return self.circuit(n).depth()


class FixedFamily(PerNFamily):
    """The same circuit at every ``n``."""

    def __init__(self, c: Circuit, name: str = ""):
        super().__init__(lambda n: c, name)


def materialize(fam: CircuitFamily, n: int, brute: bool = False) -> Circuit:
    """Query the oracles and assemble the circuit at length ``n``."""
    size = fam.size(n)
    if fam.node(n, size) is not None:
        raise FamilyInvariantError(f"node({n}, {size}) is defined past size {size}")
    gates = []
    for i in range(size):
        g = fam.node(n, i)
        if g is None:
            raise FamilyInvariantError(f"node({n}, {i}) is empty below size {size}")
        gates.append(g)
    edges = []
    for j in range(size):
        listed = None if brute else fam.in_edges(n, j)
        if listed is None:
            listed = [(i, fam.edge(n, i, j)) for i in range(size)]
        edges.extend((i, j, a) for i, a in listed if a >= 0)
    return Circuit.from_edges(gates, edges, fam.n_outputs(n), inputs_first=fam.inputs_first,
                              ordered=fam.ordered)


def eval_family(fam: CircuitFamily, n: int, x) -> np.ndarray:
    """Evaluate gate by gate straight from the oracles (no materialized object)."""
    size = fam.size(n)
    x = list(x)
    gates = [fam.node(n, j) for j in range(size)]
    srcs = []
    for j in range(size):
        listed = fam.in_edges(n, j)
        if listed is None:
            scan = range(j) if fam.ordered else range(size)
            listed = [(i, a) for i in scan if (a := fam.edge(n, i, j)) >= 0]
        srcs.append([i for i, a in sorted(listed, key=lambda t: t[1])])
    inputs = [j for j, g in enumerate(gates) if g.kind == "INPUT"]
    if len(inputs) != len(x):
        raise ArityMismatch(f"family has {len(inputs)} inputs, got {len(x)} bits")
    vals = [0] * size
    for j, v in zip(inputs, x):
        vals[j] = int(v)
    for j in (range(size) if fam.ordered else topo_order(srcs)):
        g = gates[j]
        if g.kind == "INPUT":
            continue
        s = sum(vals[i] for i in srcs[j])
        vals[j] = int(s >= g.delta) if g.kind == "GE" else int(s <= g.delta)
    return np.array(vals[size - fam.n_outputs(n):], dtype=np.uint8)


# -- text format ----------------------------------------------------------------------

def dump_circuit(c: Circuit) -> str:
    lines = [f"circuit k={c.n_inputs} kprime={c.n_outputs}"]
    lines += [f"gate {i} {g}" for i, g in enumerate(c.gates)]
    lines += [f"edge {s} {j} {a}" for s, j, a in c.edges()]
    return "\n".join(lines) + "\n"


def load_circuit(text: str) -> Circuit:
    gates, edges, kprime, k = {}, [], None, None
    for ln, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "circuit":
                fields = dict(p.split("=") for p in parts[1:])
                k, kprime = int(fields["k"]), int(fields["kprime"])
            elif parts[0] == "gate":
                kind = parts[2]
                if kind == "INPUT":
                    gates[int(parts[1])] = INPUT
                elif kind in ("GE", "LE"):
                    gates[int(parts[1])] = GateType(kind, int(parts[3]))
                else:
                    raise ValueError(kind)
            elif parts[0] == "edge":
                edges.append(tuple(int(p) for p in parts[1:4]))
            else:
                raise ValueError(parts[0])
        except (ValueError, IndexError, KeyError) as exc:
            raise CircuitError(f"line {ln}: cannot parse {line!r}") from exc
    if kprime is None:
        raise CircuitError("missing circuit header")
    if sorted(gates) != list(range(len(gates))):
        raise CircuitError("gate indices must be 0..size-1")
    order = [gates[i] for i in range(len(gates))]
    inputs_first = all(g.kind == "INPUT" for g in order[:k])
    ordered = all(s < d for s, d, _ in edges)
    c = Circuit.from_edges(order, edges, kprime, inputs_first=inputs_first, ordered=ordered)
    if c.n_inputs != k:
        raise CircuitError(f"header says k={k}, found {c.n_inputs} input gates")
    return c


# -- construction helper -------------------------------------------------------------

class CircuitBuilder:
    """Append-only construction; inputs first, then gates, then the output block."""

    def __init__(self, n_inputs: int):
        self.gates = [INPUT] * n_inputs
        self.in_edges = [[] for _ in range(n_inputs)]
        self.inputs = list(range(n_inputs))
        self._const = {}

    def add(self, gate: GateType, srcs: Sequence[int] = ()) -> int:
        self.gates.append(gate)
        self.in_edges.append(list(srcs))
        return len(self.gates) - 1

    def const(self, bit: int) -> int:
        if bit not in self._const:
            self._const[bit] = self.add(LE(0) if bit else GE(1))
        return self._const[bit]

    def embed(self, c: Circuit, srcs: Sequence[int]) -> list[int]:
        """Copy the non-input gates of ``c`` with its inputs bound to ``srcs``; returns its outputs."""
        if len(srcs) != c.n_inputs:
            raise ArityMismatch(f"sub-circuit takes {c.n_inputs} inputs, got {len(srcs)}")
        where = {}
        for i, s in zip(c.input_indices, srcs):
            where[i] = s
        for j, (g, es) in enumerate(zip(c.gates, c.in_edges)):
            if g.kind != "INPUT":
                where[j] = self.add(g, [where[s] for s in es])
        return [where[j] for j in c.output_indices]

    def finish(self, outputs: Sequence[int]) -> Circuit:
        """Close the circuit; outputs that are not already the trailing gates get identity copies."""
        outputs = list(outputs)
        size = len(self.gates)
        if outputs != list(range(size - len(outputs), size)):
            outputs = [self.add(IDENTITY, [o]) for o in outputs]
        return Circuit(self.gates, self.in_edges, len(outputs))
