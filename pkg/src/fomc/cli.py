"""``fomc``: command-line entry point.

Exit codes: 0 success, 2 unreadable input (formula, config, graph or circuit
file, bad flags), 3 a precondition fails (unknown token, block overflow,
missing seed), 4 a checked property fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import random
import sys
from fractions import Fraction

import numpy as np

from . import fom
from .circuit import dump_circuit, eval_circuit, load_circuit, materialize, validate
from .compile import check_bounds, compile_family
from .graph import FixedGraphFamily, dump_graph, eval_graph, graph_stats, materialize_graph
from .pfloat import PrecisionSpec, approx_simplex
from .registries import get_registry, load_graph
from .synth import synth_adder, synth_float_sum, synth_symmetric
from .transformer import (encode_input, forward, from_config, majority_transformer,
                          to_config, to_graph_family, toy_transformer)

EXIT_PARSE, EXIT_PRECONDITION, EXIT_PROPERTY = 2, 3, 4


class CLIError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


def _read(path):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as e:
        raise CLIError(f"cannot read {path}: {e.strerror}", EXIT_PARSE) from e


def _parsing(what, fn, *args):
    try:
        return fn(*args)
    except CLIError:
        raise
    except (ValueError, KeyError, TypeError, SyntaxError) as e:
        raise CLIError(f"cannot parse {what}: {e}", EXIT_PARSE) from e


def _load_config(path):
    return _parsing(path, from_config, _read(path))


def _load_graph(path):
    return _parsing(path, load_graph, _read(path))


def _load_circuit(path):
    return _parsing(path, load_circuit, _read(path))


def _need_seed(args):
    if args.seed is None:
        raise CLIError(f"{args.command} is randomized and needs --seed", EXIT_PRECONDITION)
    return args.seed


def _bits(text):
    text = text.strip()
    if not text or set(text) - {"0", "1"}:
        raise CLIError(f"expected a bit string, got {text!r}", EXIT_PARSE)
    return [int(c) for c in text]


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


# -- commands ------------------------------------------------------------------------
# Each returns (report dict, text lines, exit code).

def cmd_eval(args):
    alphabet = list(args.alphabet) if args.alphabet else None
    if args.sentence:
        phi = _parsing(args.sentence, fom.library_sentence, args.sentence)
    else:
        phi = _parsing(args.formula, fom.parse, _read(args.formula), alphabet)
    if alphabet is not None:
        bad = sorted(set(args.input) - set(alphabet))
        if bad:
            raise CLIError(f"input symbols {bad} are not in the alphabet", EXIT_PRECONDITION)
    value = fom.evaluate(phi, args.input)
    return {"input": args.input, "value": value}, [str(value).lower()], 0


def cmd_transformer(args):
    if args.action == "example":
        spec = majority_transformer() if args.name == "majority" else toy_transformer(args.seed or 0)
        text = json.dumps(to_config(spec), indent=2) + "\n"
        if args.out:
            _write(args.out, text)
            return {"out": args.out}, [f"wrote {args.out}"], 0
        return to_config(spec), text.splitlines(), 0
    spec = _load_config(args.config)
    if args.action == "run":
        out = forward(spec, args.input)
        return {"input": args.input, "output": out}, [str(out)], 0
    fam, reg = to_graph_family(spec, table_bits=args.table_bits)
    g = materialize_graph(fam, args.n)
    P = spec.spec_for(args.n)
    stats = graph_stats(g)
    comps = {}
    for t in sorted(set(g.nodes) - {"input"}):
        c = reg[t].family.circuit(args.n)
        comps[t] = {"in_bits": c.n_inputs, "out_bits": c.n_outputs, "size": c.size,
                    "depth": c.depth(), "full_table": fam.lowering.uses_full_table(t, args.n)}
    rep = {"n": args.n, "precision": [P.p_m, P.p_e],
           "graph_size": stats["size"], "graph_depth": stats["depth"], "components": comps}
    lines = [f"n={args.n} graph size={stats['size']} depth={stats['depth']}"]
    lines += [f"  {t}: {v['in_bits']}->{v['out_bits']} bits, size {v['size']}, depth {v['depth']}"
              f"{' (full table)' if v['full_table'] else ''}" for t, v in comps.items()]
    if args.out:
        _write(args.out, dump_graph(g))
        lines.append(f"wrote {args.out}")
    return rep, lines, 0


def _compiled(args):
    G = FixedGraphFamily(_load_graph(args.graph))
    reg = _parsing(args.registry, get_registry, args.registry)
    return G, reg, compile_family(G, reg)


def cmd_compile(args):
    _, _, C = _compiled(args)
    c = materialize(C, args.n)
    _write(args.out, dump_circuit(c))
    rep = {"n": args.n, "size": c.size, "depth": c.depth(), "inputs": c.n_inputs, "outputs": c.n_outputs}
    return rep, [f"wrote {args.out}: size {c.size}, depth {c.depth()}"], 0


def cmd_check(args):
    rng = random.Random(_need_seed(args))
    n = args.n
    if args.config:
        spec = _load_config(args.config)
        fam, reg = to_graph_family(spec)
        C = compile_family(fam, reg)
        c = materialize(C, n)
        xs = ["".join(rng.choice(spec.alphabet) for _ in range(n)) for _ in range(args.trials)]
        X = np.array([[b for blk in encode_input(spec, x) for b in blk] for x in xs], dtype=np.uint8)
        got = eval_circuit(c, X)[:, 0]
        ref = [forward(spec, x) for x in xs]
    else:
        G, reg, C = _compiled(args)
        g = materialize_graph(G, n)
        c = materialize(C, n)
        w = reg.input_width(n)
        k = sum(t == "input" for t in g.nodes)
        ins = [[tuple(rng.randrange(2) for _ in range(w)) for _ in range(k)] for _ in range(args.trials)]
        X = np.array([[b for x in row for b in x] for row in ins], dtype=np.uint8).reshape(args.trials, -1)
        got = [tuple(r) for r in eval_circuit(c, X)]
        ref = [tuple(eval_graph(g, reg, row, n)) for row in ins]
    agree = sum(int(np.all(np.asarray(a) == np.asarray(b))) for a, b in zip(got, ref))
    bounds = check_bounds(C, n, c, strict=False)
    ok = agree == args.trials and bounds["size_ok"] and bounds["depth_ok"]
    rep = {"result": "PASS" if ok else "FAIL", "agree": agree, "trials": args.trials, **bounds,
           "size_margin": bounds["size_bound"] - bounds["size_C"],
           "depth_margin": bounds["depth_bound"] - bounds["depth_C"]}
    lines = [f"{rep['result']}, {agree}/{args.trials} equivalences",
             f"size {bounds['size_C']} <= {bounds['size_bound']} (margin {rep['size_margin']})",
             f"depth {bounds['depth_C']} <= {bounds['depth_bound']} (margin {rep['depth_margin']})"]
    return rep, lines, 0 if ok else EXIT_PROPERTY


def _ns(text):
    try:
        if ":" in text:
            parts = [int(v) for v in text.split(":")]
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            return list(range(lo, hi + 1, step))
        return [int(v) for v in text.split(",")]
    except ValueError as e:
        raise CLIError(f"bad --n {text!r}; use N, N1,N2,... or LO:HI[:STEP]", EXIT_PARSE) from e


def cmd_precision_lab(args):
    spec = PrecisionSpec(args.pm, args.pe)
    bound = 1 << (1 << spec.p)
    rng = None if args.uniform else random.Random(_need_seed(args))
    rows = []
    for n in _ns(args.n):
        if n < 1:
            raise CLIError("n must be positive", EXIT_PRECONDITION)
        for _ in range(1 if args.uniform else args.trials):
            if args.uniform:
                vec = [Fraction(1, n)] * n
            else:
                raw = [rng.randrange(1 << 16) for _ in range(n)]
                raw[rng.randrange(n)] += 1
                vec = [Fraction(r, sum(raw)) for r in raw]
            out, count = approx_simplex(vec, spec)
            under = int(any(v > 0 and f.is_zero for v, f in zip(vec, out)))
            rows.append({"n": n, "p_m": spec.p_m, "p_e": spec.p_e, "nonzero_count": count,
                         "bound": bound, "underflow": under})
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    wr.writeheader()
    wr.writerows(rows)
    ok = all(r["nonzero_count"] <= bound for r in rows)
    if args.csv:
        _write(args.csv, buf.getvalue())
        lines = [f"wrote {len(rows)} rows to {args.csv}"]
    else:
        lines = buf.getvalue().splitlines()
    return {"rows": rows, "bound_ok": ok}, lines, 0 if ok else EXIT_PROPERTY


def cmd_circuit(args):
    if args.action == "synth":
        if args.kind == "adder":
            c = synth_adder(args.width)
        elif args.kind == "float-sum":
            c = synth_float_sum(args.k, PrecisionSpec(args.pm, args.pe))
        else:
            c = synth_symmetric(args.k, lambda cnt: 2 * cnt >= args.k)
        text = dump_circuit(c)
    else:
        c = _load_circuit(args.circuit)
        _parsing(args.circuit, validate, c)
        text = dump_circuit(c)
    rep = {"size": c.size, "depth": c.depth(), "inputs": c.n_inputs, "outputs": c.n_outputs}
    if args.action == "eval":
        X = np.array([_bits(s) for s in args.input], dtype=np.uint8)
        if X.shape[1] != c.n_inputs:
            raise CLIError(f"circuit takes {c.n_inputs} input bits, got {X.shape[1]}", EXIT_PRECONDITION)
        outs = ["".join(str(int(v)) for v in row) for row in eval_circuit(c, X)]
        rep["outputs_bits"] = outs
        return rep, outs, 0
    if getattr(args, "out", None):
        _write(args.out, text)
        return rep, [f"wrote {args.out}: size {c.size}, depth {c.depth()}"], 0
    if args.action == "dump" and args.stats:
        return rep, [f"size {c.size} depth {c.depth()} inputs {c.n_inputs} outputs {c.n_outputs}"], 0
    return rep, text.splitlines(), 0


# -- argument parsing -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for randomized commands")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="print nothing")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="print a JSON report")

    p = argparse.ArgumentParser(prog="fomc", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--json", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eval", parents=[common], help="evaluate an FO(M) sentence on a string")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--formula", help="file holding the sentence")
    src.add_argument("--sentence", help="library sentence name")
    e.add_argument("--input", required=True)
    e.add_argument("--alphabet")
    e.set_defaults(fn=cmd_eval)

    t = sub.add_parser("transformer", parents=[common], help="run or lower a transformer config")
    tsub = t.add_subparsers(dest="action", required=True)
    tr = tsub.add_parser("run", parents=[common])
    tr.add_argument("--config", required=True)
    tr.add_argument("--input", required=True)
    tl = tsub.add_parser("lower", parents=[common])
    tl.add_argument("--config", required=True)
    tl.add_argument("--n", type=int, required=True)
    tl.add_argument("--table-bits", type=int, default=12)
    tl.add_argument("--out", help="write the graph at this n")
    tx = tsub.add_parser("example", parents=[common], help="print a ready-made config")
    tx.add_argument("--name", choices=("toy", "majority"), default="toy")
    tx.add_argument("--out")
    t.set_defaults(fn=cmd_transformer)

    c = sub.add_parser("compile", parents=[common], help="compile a graph to a circuit")
    c.add_argument("--graph", required=True)
    c.add_argument("--registry", required=True)
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(fn=cmd_compile)

    k = sub.add_parser("check", parents=[common], help="compiled circuit against its reference")
    ksrc = k.add_mutually_exclusive_group(required=True)
    ksrc.add_argument("--graph")
    ksrc.add_argument("--config")
    k.add_argument("--registry", default="arith")
    k.add_argument("--n", type=int, required=True)
    k.add_argument("--trials", type=int, default=50)
    k.set_defaults(fn=cmd_check)

    pl = sub.add_parser("precision-lab", parents=[common], help="rounding of probability vectors")
    pl.add_argument("--pm", type=int, required=True)
    pl.add_argument("--pe", type=int, required=True)
    pl.add_argument("--n", required=True, help="N, N1,N2,... or LO:HI[:STEP]")
    pl.add_argument("--uniform", action="store_true", help="the uniform vector instead of random ones")
    pl.add_argument("--trials", type=int, default=10)
    pl.add_argument("--csv", help="write rows here instead of stdout")
    pl.set_defaults(fn=cmd_precision_lab)

    ci = sub.add_parser("circuit", parents=[common], help="dump, evaluate or synthesize circuits")
    csub = ci.add_subparsers(dest="action", required=True)
    cd = csub.add_parser("dump", parents=[common])
    cd.add_argument("--circuit", required=True)
    cd.add_argument("--stats", action="store_true")
    cd.add_argument("--out")
    ce = csub.add_parser("eval", parents=[common])
    ce.add_argument("--circuit", required=True)
    ce.add_argument("--input", required=True, action="append", help="bit string; repeatable")
    cs = csub.add_parser("synth", parents=[common])
    cs.add_argument("--kind", choices=("adder", "float-sum", "majority"), required=True)
    cs.add_argument("--width", type=int, default=4)
    cs.add_argument("--k", type=int, default=2)
    cs.add_argument("--pm", type=int, default=2)
    cs.add_argument("--pe", type=int, default=2)
    cs.add_argument("--out")
    ci.set_defaults(fn=cmd_circuit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rep, lines, code = args.fn(args)
    except CLIError as e:
        print(f"fomc: {e}", file=sys.stderr)
        return e.code
    except (ValueError, KeyError) as e:
        print(f"fomc: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    if not args.quiet:
        if args.json:
            print(json.dumps(rep, sort_keys=True, default=str))
        else:
            print("\n".join(lines))
    return code


if __name__ == "__main__":
    sys.exit(main())
