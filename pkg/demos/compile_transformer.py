"""Lower the toy transformer to a graph, compile it, and compare with the forward pass."""

import itertools

import numpy as np

from fomc.circuit import eval_circuit, materialize
from fomc.compile import check_bounds, compile_family
from fomc.transformer import encode_input, forward, to_graph_family, toy_transformer

spec = toy_transformer(0)
fam, reg = to_graph_family(spec)
C = compile_family(fam, reg)
for n in (1, 2, 3, 4):
    c = materialize(C, n)
    words = ["".join(w) for w in itertools.product(spec.alphabet, repeat=n)]
    X = np.array([[b for blk in encode_input(spec, w) for b in blk] for w in words], dtype=np.uint8)
    got = eval_circuit(c, X)[:, 0]
    agree = sum(int(g) == forward(spec, w) for g, w in zip(got, words))
    rep = check_bounds(C, n, c)
    print(f"n={n}: {agree}/{len(words)} agree, size {rep['size_C']}/{rep['size_bound']}, "
          f"depth {rep['depth_C']}/{rep['depth_bound']}")
