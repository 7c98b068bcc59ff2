"""Finite-precision transformers, FO(M) logic and threshold circuits in one toolkit.

Submodules:

- ``pfloat``: p-precision floats with exact rounding.
- ``fom``: FO(M) formulas, parser, evaluator and a small sentence library.
- ``circuit`` and ``synth``: threshold circuits, circuit families and synthesis.
- ``graph``: computation graphs and graph families.
- ``compile``: graph family plus registry circuits to one circuit family.
- ``transformer``: a fixed-precision transformer and its lowering to a graph family.
"""

from . import circuit, compile, fom, graph, pfloat, registries, synth, transformer
from .circuit import Circuit, eval_circuit, materialize
from .compile import check_bounds, compile_family, pad_family
from .fom import desugar, evaluate, library_sentence, parse
from .graph import ComputationGraph, eval_graph, materialize_graph
from .pfloat import PFloat, PrecisionSpec, round_fraction, sum_iter
from .transformer import TransformerSpec, forward, to_graph_family

__version__ = "0.1.0"

__all__ = [
    "circuit", "compile", "fom", "graph", "pfloat", "registries", "synth", "transformer",
    "Circuit", "eval_circuit", "materialize", "check_bounds", "compile_family", "pad_family",
    "desugar", "evaluate", "library_sentence", "parse", "ComputationGraph", "eval_graph",
    "materialize_graph", "PFloat", "PrecisionSpec", "round_fraction", "sum_iter",
    "TransformerSpec", "forward", "to_graph_family",
]
