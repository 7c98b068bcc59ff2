"""First-order logic with majority over strings.

Formulas are immutable trees.  Quantifiers range over positions ``1..n``; the
evaluator enumerates directly and memoizes subformula results per
assignment of their free variables, so a formula of quantifier depth ``q``
costs at most ``O(n**q)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

__all__ = [
    "One", "LastN", "Var", "Add", "Sub", "IndexTerm",
    "TokenPred", "Bit", "Cmp", "And", "Or", "Not", "Exists", "Forall", "Majority",
    "CountExact", "CountAtLeast", "CountAtMost", "CondMajority", "Formula",
    "FOMSyntaxError", "UnknownSymbol", "UnboundVariable", "UnknownSentence",
    "parse", "pretty", "eval_term", "evaluate", "desugar", "free_vars",
    "library_sentence", "LIBRARY", "InputString", "random_sentence",
]


# -- terms --------------------------------------------------------------------

@dataclass(frozen=True)
class One:
    pass


@dataclass(frozen=True)
class LastN:
    pass


@dataclass(frozen=True)
class Var:
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("empty variable name")


@dataclass(frozen=True)
class Add:
    left: "IndexTerm"
    right: "IndexTerm"


@dataclass(frozen=True)
class Sub:
    left: "IndexTerm"
    right: "IndexTerm"


IndexTerm = Union[One, LastN, Var, Add, Sub]


# -- formulas -----------------------------------------------------------------

@dataclass(frozen=True)
class TokenPred:
    symbol: str
    index: IndexTerm


@dataclass(frozen=True)
class Bit:
    index: IndexTerm
    position: IndexTerm


@dataclass(frozen=True)
class Cmp:
    rel: str  # one of "=", "<=", ">="
    left: IndexTerm
    right: IndexTerm


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Formula"


@dataclass(frozen=True)
class Forall:
    var: str
    body: "Formula"


@dataclass(frozen=True)
class Majority:
    var: str
    body: "Formula"


@dataclass(frozen=True)
class CountExact:
    count: IndexTerm
    var: str
    body: "Formula"


@dataclass(frozen=True)
class CountAtLeast:
    count: IndexTerm
    var: str
    body: "Formula"


@dataclass(frozen=True)
class CountAtMost:
    count: IndexTerm
    var: str
    body: "Formula"


@dataclass(frozen=True)
class CondMajority:
    var: str
    guard: "Formula"
    body: "Formula"


Formula = Union[TokenPred, Bit, Cmp, And, Or, Not, Exists, Forall, Majority,
                CountExact, CountAtLeast, CountAtMost, CondMajority]

_QUANT = (Exists, Forall, Majority)
_COUNT = (CountExact, CountAtLeast, CountAtMost)


class FOMSyntaxError(SyntaxError):
    """Parse failure; ``offset`` is the 1-based column, as for SyntaxError."""

    def __init__(self, msg, offset, expected=()):
        super().__init__(msg)
        self.offset = offset
        self.expected = tuple(expected)

    def __str__(self):
        exp = f" (expected {', '.join(self.expected)})" if self.expected else ""
        return f"{self.msg} at column {self.offset}{exp}"


class UnknownSymbol(ValueError):
    pass


class UnboundVariable(KeyError):
    pass


class UnknownSentence(KeyError):
    pass


# -- free variables -------------------------------------------------------------

def _term_vars(t) -> frozenset:
    if isinstance(t, Var):
        return frozenset([t.name])
    if isinstance(t, (Add, Sub)):
        return _term_vars(t.left) | _term_vars(t.right)
    return frozenset()


def free_vars(phi) -> frozenset:
    if isinstance(phi, TokenPred):
        return _term_vars(phi.index)
    if isinstance(phi, Bit):
        return _term_vars(phi.index) | _term_vars(phi.position)
    if isinstance(phi, Cmp):
        return _term_vars(phi.left) | _term_vars(phi.right)
    if isinstance(phi, (And, Or)):
        return free_vars(phi.left) | free_vars(phi.right)
    if isinstance(phi, Not):
        return free_vars(phi.body)
    if isinstance(phi, _QUANT):
        return free_vars(phi.body) - {phi.var}
    if isinstance(phi, _COUNT):
        return _term_vars(phi.count) | (free_vars(phi.body) - {phi.var})
    if isinstance(phi, CondMajority):
        return (free_vars(phi.guard) | free_vars(phi.body)) - {phi.var}
    raise TypeError(f"not a formula: {phi!r}")


def _all_vars(phi) -> set:
    out = set(free_vars(phi))
    if isinstance(phi, (_QUANT + _COUNT + (CondMajority,))):
        out.add(phi.var)
    for child in _children(phi):
        out |= _all_vars(child)
    return out


def _children(phi):
    if isinstance(phi, (And, Or)):
        return (phi.left, phi.right)
    if isinstance(phi, (Not,) + _QUANT + _COUNT):
        return (phi.body,)
    if isinstance(phi, CondMajority):
        return (phi.guard, phi.body)
    return ()


# -- parsing ------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*(?:(E\^|E>=|E<=)|([A-Za-z_][A-Za-z0-9_']*)|(<=|>=|[().:,&|!+\-=]|1))")


def _tokenize(text):
    pos, out = 0, []
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        mt = _TOKEN_RE.match(text, pos)
        if not mt or mt.end() == pos:
            raise FOMSyntaxError(f"unexpected character {text[pos]!r}", pos + 1)
        tok = mt.group(1) or mt.group(2) or mt.group(3)
        out.append((tok, mt.start(mt.lastindex)))
        pos = mt.end()
    out.append(("<end>", len(text)))
    return out


class _Parser:
    def __init__(self, text, alphabet):
        self.toks = _tokenize(text)
        self.i = 0
        self.alphabet = None if alphabet is None else set(alphabet)

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)][0]

    def fail(self, expected):
        tok, pos = self.toks[self.i]
        what = "end of input" if tok == "<end>" else f"{tok!r}"
        raise FOMSyntaxError(f"unexpected {what}", pos + 1, expected)

    def take(self, tok):
        if self.peek() != tok:
            self.fail([repr(tok)])
        self.i += 1

    def ident(self):
        tok = self.peek()
        if not _is_var(tok):
            self.fail(["variable"])
        self.i += 1
        return tok

    def formula(self):
        left = self.conj()
        while self.peek() == "|":
            self.i += 1
            left = Or(left, self.conj())
        return left

    def conj(self):
        left = self.unary()
        while self.peek() == "&":
            self.i += 1
            left = And(left, self.unary())
        return left

    def unary(self):
        tok = self.peek()
        if tok == "!":
            self.i += 1
            return Not(self.unary())
        if tok == "(":
            self.i += 1
            phi = self.formula()
            self.take(")")
            return phi
        if tok in ("E", "A", "M") and _is_var(self.peek(1)):
            self.i += 1
            var = self.ident()
            if tok == "M" and self.peek() == ":":
                self.i += 1
                guard = self.formula()
                self.take(".")
                return CondMajority(var, guard, self.formula())
            self.take(".")
            body = self.formula()
            return {"E": Exists, "A": Forall, "M": Majority}[tok](var, body)
        if tok in ("E^", "E>=", "E<="):
            self.i += 1
            count = self.term()
            var = self.ident()
            self.take(":")
            body = self.formula()
            return {"E^": CountExact, "E>=": CountAtLeast, "E<=": CountAtMost}[tok](count, var, body)
        if tok == "bit" and self.peek(1) == "(":
            self.i += 2
            a = self.term()
            self.take(",")
            b = self.term()
            self.take(")")
            return Bit(a, b)
        if _is_var(tok) and self.peek(1) == "(":
            if self.alphabet is not None and tok not in self.alphabet:
                raise UnknownSymbol(f"symbol {tok!r} not in alphabet {sorted(self.alphabet)}")
            self.i += 2
            t = self.term()
            self.take(")")
            return TokenPred(tok, t)
        if tok in ("1", "n") or _is_var(tok):
            left = self.term()
            rel = self.peek()
            if rel not in ("=", "<=", ">="):
                self.fail(["'='", "'<='", "'>='"])
            self.i += 1
            return Cmp(rel, left, self.term())
        self.fail(["formula"])

    def term(self):
        left = self.atom_term()
        while self.peek() in ("+", "-"):
            op = self.peek()
            self.i += 1
            right = self.atom_term()
            left = Add(left, right) if op == "+" else Sub(left, right)
        return left

    def atom_term(self):
        tok = self.peek()
        if tok == "1":
            self.i += 1
            return One()
        if tok == "n":
            self.i += 1
            return LastN()
        if _is_var(tok) and self.peek(1) != "(":
            self.i += 1
            return Var(tok)
        self.fail(["'1'", "'n'", "variable"])


_RESERVED = {"E", "A", "M", "n", "bit", "<end>"}


def _is_var(tok):
    return bool(re.fullmatch(r"[A-Za-z_][A-Za-z0-9_']*", tok)) and tok not in _RESERVED


def parse(text: str, alphabet: Iterable[str] | None = None) -> Formula:
    """Parse ASCII concrete syntax; ``alphabet`` restricts token predicates."""
    p = _Parser(text, alphabet)
    phi = p.formula()
    if p.peek() != "<end>":
        p.fail(["end of input"])
    return phi


def _pterm(t) -> str:
    if isinstance(t, One):
        return "1"
    if isinstance(t, LastN):
        return "n"
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Add):
        return f"{_pterm(t.left)}+{_pterm_r(t.right)}"
    if isinstance(t, Sub):
        return f"{_pterm(t.left)}-{_pterm_r(t.right)}"
    raise TypeError(t)


def _pterm_r(t):
    # terms have no parentheses, so a compound right operand cannot round-trip
    if isinstance(t, (Add, Sub)):
        raise ValueError("right-nested index arithmetic has no concrete syntax")
    return _pterm(t)


def pretty(phi) -> str:
    """Fully parenthesized concrete syntax; ``parse(pretty(f)) == f``."""
    if isinstance(phi, TokenPred):
        return f"{phi.symbol}({_pterm(phi.index)})"
    if isinstance(phi, Bit):
        return f"bit({_pterm(phi.index)}, {_pterm(phi.position)})"
    if isinstance(phi, Cmp):
        return f"{_pterm(phi.left)} {phi.rel} {_pterm(phi.right)}"
    if isinstance(phi, And):
        return f"({pretty(phi.left)} & {pretty(phi.right)})"
    if isinstance(phi, Or):
        return f"({pretty(phi.left)} | {pretty(phi.right)})"
    if isinstance(phi, Not):
        return f"!{pretty(phi.body)}" if not isinstance(phi.body, Cmp) else f"!({pretty(phi.body)})"
    if isinstance(phi, _QUANT):
        q = {Exists: "E", Forall: "A", Majority: "M"}[type(phi)]
        return f"({q} {phi.var}. {pretty(phi.body)})"
    if isinstance(phi, _COUNT):
        q = {CountExact: "E^", CountAtLeast: "E>=", CountAtMost: "E<="}[type(phi)]
        return f"({q}{_pterm(phi.count)} {phi.var}: {pretty(phi.body)})"
    if isinstance(phi, CondMajority):
        return f"(M {phi.var}: ({pretty(phi.guard)}). {pretty(phi.body)})"
    raise TypeError(phi)


# -- semantics ----------------------------------------------------------------

class InputString(tuple):
    """A nonempty string over a declared alphabet."""

    def __new__(cls, symbols: Sequence[str], alphabet: Iterable[str] | None = None):
        syms = tuple(symbols)
        if not syms:
            raise ValueError("input strings must be nonempty")
        if alphabet is not None:
            bad = set(syms) - set(alphabet)
            if bad:
                raise ValueError(f"symbols {sorted(bad)} not in alphabet")
        return super().__new__(cls, syms)


def eval_term(t, env: Mapping[str, int], n: int) -> int:
    if isinstance(t, One):
        return 1
    if isinstance(t, LastN):
        return n
    if isinstance(t, Var):
        try:
            return env[t.name]
        except KeyError:
            raise UnboundVariable(t.name) from None
    if isinstance(t, Add):
        return eval_term(t.left, env, n) + eval_term(t.right, env, n)
    if isinstance(t, Sub):
        return eval_term(t.left, env, n) - eval_term(t.right, env, n)
    raise TypeError(f"not a term: {t!r}")


class _Evaluator:
    def __init__(self, w):
        self.w = w
        self.n = len(w)
        self.memo = {}
        self.fv = {}
        self.conj = {}

    def free(self, phi):
        key = id(phi)
        got = self.fv.get(key)
        if got is None:
            got = self.fv[key] = (phi, tuple(sorted(free_vars(phi))))
        return got[1]

    def count(self, var, body, env):
        # number of positions v making body true, memoized on body's other free vars
        names = self.free(body)
        key = ("#", id(body), var) + tuple(env.get(x) for x in names if x != var)
        got = self.memo.get(key)
        if got is None:
            inner = dict(env)
            got = 0
            for v in range(1, self.n + 1):
                inner[var] = v
                got += self.ev(body, inner)
            self.memo[key] = got
        return got

    def ev(self, phi, env) -> bool:
        n = self.n
        if isinstance(phi, TokenPred):
            i = eval_term(phi.index, env, n)
            return 1 <= i <= n and self.w[i - 1] == phi.symbol
        if isinstance(phi, Bit):
            i = eval_term(phi.index, env, n)
            j = eval_term(phi.position, env, n)
            return i >= 0 and 1 <= j <= 64 and bool((i >> (j - 1)) & 1)
        if isinstance(phi, Cmp):
            a = eval_term(phi.left, env, n)
            b = eval_term(phi.right, env, n)
            return a == b if phi.rel == "=" else (a <= b if phi.rel == "<=" else a >= b)
        if isinstance(phi, And):
            return self.ev(phi.left, env) and self.ev(phi.right, env)
        if isinstance(phi, Or):
            return self.ev(phi.left, env) or self.ev(phi.right, env)
        if isinstance(phi, Not):
            return not self.ev(phi.body, env)
        if isinstance(phi, Exists):
            return self.count(phi.var, phi.body, env) > 0
        if isinstance(phi, Forall):
            return self.count(phi.var, phi.body, env) == n
        if isinstance(phi, Majority):
            return 2 * self.count(phi.var, phi.body, env) >= n
        if isinstance(phi, _COUNT):
            k = eval_term(phi.count, env, n)
            c = self.count(phi.var, phi.body, env)
            if isinstance(phi, CountExact):
                return c == k
            return c >= k if isinstance(phi, CountAtLeast) else c <= k
        if isinstance(phi, CondMajority):
            g = self.count(phi.var, phi.guard, env)
            if not g:
                return True
            both = self.conj.get(id(phi))
            if both is None:
                # keep a reference so the id stays valid for the memo key
                both = self.conj[id(phi)] = (phi, And(phi.guard, phi.body))
            return 2 * self.count(phi.var, both[1], env) >= g
        raise TypeError(f"not a formula: {phi!r}")


def evaluate(phi, w: Sequence[str], env: Mapping[str, int] | None = None) -> bool:
    """Truth value of ``phi`` on string ``w`` under ``env``."""
    w = w if isinstance(w, InputString) else InputString(w)
    env = dict(env or {})
    missing = free_vars(phi) - env.keys()
    if missing:
        raise UnboundVariable(", ".join(sorted(missing)))
    return bool(_Evaluator(w).ev(phi, env))


# -- desugaring -----------------------------------------------------------------

def _rename(phi, old, new):
    """Substitute variable ``new`` for free occurrences of ``old``."""
    def rt(t):
        if isinstance(t, Var):
            return Var(new) if t.name == old else t
        if isinstance(t, (Add, Sub)):
            return type(t)(rt(t.left), rt(t.right))
        return t

    if isinstance(phi, TokenPred):
        return TokenPred(phi.symbol, rt(phi.index))
    if isinstance(phi, Bit):
        return Bit(rt(phi.index), rt(phi.position))
    if isinstance(phi, Cmp):
        return Cmp(phi.rel, rt(phi.left), rt(phi.right))
    if isinstance(phi, (And, Or)):
        return type(phi)(_rename(phi.left, old, new), _rename(phi.right, old, new))
    if isinstance(phi, Not):
        return Not(_rename(phi.body, old, new))
    if isinstance(phi, _QUANT):
        return phi if phi.var == old else type(phi)(phi.var, _rename(phi.body, old, new))
    if isinstance(phi, _COUNT):
        body = phi.body if phi.var == old else _rename(phi.body, old, new)
        return type(phi)(rt(phi.count), phi.var, body)
    if isinstance(phi, CondMajority):
        if phi.var == old:
            return phi
        return CondMajority(phi.var, _rename(phi.guard, old, new), _rename(phi.body, old, new))
    raise TypeError(phi)


class _Fresh:
    def __init__(self, taken):
        self.taken = set(taken)
        self.k = 0

    def __call__(self, stem):
        while True:
            self.k += 1
            name = f"{stem}{self.k}"
            if name not in self.taken:
                self.taken.add(name)
                return name


def desugar(phi):
    """Rewrite conditional majority into counting and threshold quantifiers.

    ``M i : g . b`` becomes: no position satisfies ``g``, or for the exact count
    ``k`` of ``g`` there is an ``h`` with ``2h`` in ``{k, k+1}`` and at least ``h``
    positions satisfy ``g & b``.
    """
    fresh = _Fresh(_all_vars(phi))

    def go(f):
        if isinstance(f, CondMajority):
            g, b = go(f.guard), go(f.body)
            k, h, j = fresh("k"), fresh("h"), fresh("j")
            gj = _rename(g, f.var, j)
            bj = _rename(b, f.var, j)
            half = And(Cmp(">=", Add(Var(h), Var(h)), Var(k)),
                       Cmp("<=", Add(Var(h), Var(h)), Add(Var(k), One())))
            rewrite = Exists(k, Exists(h, And(And(CountExact(Var(k), f.var, g), half),
                                                  CountAtLeast(Var(h), j, And(gj, bj)))))
            return Or(Not(Exists(f.var, g)), rewrite)
        if isinstance(f, (And, Or)):
            return type(f)(go(f.left), go(f.right))
        if isinstance(f, Not):
            return Not(go(f.body))
        if isinstance(f, _QUANT):
            return type(f)(f.var, go(f.body))
        if isinstance(f, _COUNT):
            return type(f)(f.count, f.var, go(f.body))
        return f

    return go(phi)


# -- example sentences ----------------------------------------------------------

def _a(i):
    return TokenPred("a", Var(i))


def _b(i):
    return TokenPred("b", Var(i))


def _conj(*fs):
    out = fs[0]
    for f in fs[1:]:
        out = And(out, f)
    return out


def _ambm():
    # l < k written as !(l >= k)
    return _conj(Majority("i", _a("i")), Majority("j", _b("j")),
                 Not(Exists("k", Exists("l", _conj(_a("k"), _b("l"), Not(Cmp(">=", Var("l"), Var("k"))))))))


def _dyck1():
    # count variables range over 1..n, so the counts are written as a-1 and b-1
    prefix_a = CountExact(Sub(Var("a"), One()), "j", And(_a("j"), Cmp("<=", Var("j"), Var("i"))))
    prefix_b = CountExact(Sub(Var("b"), One()), "j", And(_b("j"), Cmp("<=", Var("j"), Var("i"))))
    balanced = Forall("i", Exists("a", Exists("b", _conj(prefix_a, prefix_b, Cmp("<=", Var("b"), Var("a"))))))
    return _conj(balanced, Majority("i", _a("i")), Majority("j", _b("j")))


LIBRARY = {
    "ambm": _ambm,
    "bigram": lambda: Exists("i", And(_a("i"), TokenPred("b", Add(Var("i"), One())))),
    "skip_bigram": lambda: Exists("i", And(_b("i"), Exists("j", And(Cmp("<=", Var("j"), Var("i")), _a("j"))))),
    "majority": lambda: Majority("i", _b("i")),
    "dyck1": _dyck1,
}


def library_sentence(name: str) -> Formula:
    try:
        return LIBRARY[name]()
    except KeyError:
        raise UnknownSentence(name) from None


def random_sentence(rng, depth: int = 3, alphabet: Sequence[str] = "ab", cond: int = 2):
    """A seeded random sentence with at most ``cond`` nested conditional majorities.

    ``rng`` is a ``random.Random``.  Atoms only mention bound variables, so
    the result has no free variables.
    """
    counter = [0]

    def var():
        counter[0] += 1
        return f"v{counter[0]}"

    def term(bound):
        r = rng.random()
        base = Var(rng.choice(bound))
        if r < 0.15:
            return Add(base, One())
        if r < 0.25:
            return Sub(base, One())
        if r < 0.3:
            return LastN()
        return base

    def atom(bound):
        r = rng.random()
        if r < 0.6:
            return TokenPred(rng.choice(list(alphabet)), term(bound))
        if r < 0.9:
            return Cmp(rng.choice(("=", "<=", ">=")), term(bound), term(bound))
        return Bit(term(bound), Var(rng.choice(bound)))

    def go(d, bound, c):
        if bound and (d == 0 or rng.random() < 0.25):
            return atom(bound)
        kinds = ["E", "A", "M", "count"] + (["cond"] * 2 if c > 0 else [])
        if bound:
            kinds += ["not", "and", "or"]
        k = rng.choice(kinds)
        d = max(d - 1, 0)
        if k == "not":
            return Not(go(d, bound, c))
        if k in ("and", "or"):
            return (And if k == "and" else Or)(go(d, bound, c), go(d, bound, c))
        v = var()
        inner = bound + (v,)
        if k == "cond":
            return CondMajority(v, go(d, inner, c - 1), go(d, inner, c - 1))
        if k == "count":
            cls = rng.choice((CountExact, CountAtLeast, CountAtMost))
            cnt = term(bound) if bound and rng.random() < 0.5 else rng.choice((One(), LastN()))
            return cls(cnt, v, go(d, inner, c))
        return {"E": Exists, "A": Forall, "M": Majority}[k](v, go(d, inner, c))

    return go(depth, (), cond)


# the operation name used by the rest of the package and the CLI
eval = evaluate  # noqa: A001
