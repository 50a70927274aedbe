"""Syntactically co-safe LTL: formulas, finite-trace semantics, and DFA translation.

Formulas are kept in negation normal form (negation at atoms only) and are
compiled to complete deterministic automata whose accepting states are
absorbing.  Translation works by formula progression: the states of the
automaton are canonical forms of progressed formulas, the accepting state is
the constant ``true`` and the completion sink is ``false``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

__all__ = [
    "Formula",
    "TrueF",
    "FalseF",
    "Atom",
    "NegAtom",
    "And",
    "Or",
    "Next",
    "Until",
    "Eventually",
    "ParseError",
    "AlphabetError",
    "CapacityError",
    "Dfa",
    "declare_alphabet",
    "all_symbols",
    "parse",
    "fmt",
    "progress",
    "canonicalize",
    "to_dfa",
    "accepts",
    "good_prefix_oracle",
    "dfa_to_json",
    "dfa_from_json",
    "dfa_to_dot",
]

MAX_ALPHABET_ATOMS = 16
DEFAULT_STATE_CAP = 10**6

# Names the parser can never read as atoms.  X and F are permitted as
# proposition names: they act as prefix operators only when an operand
# follows, so region names like F stay expressible.
RESERVED_WORDS = frozenset({"true", "U"})


class ParseError(ValueError):
    """Raised for malformed formula text; carries the offending position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class AlphabetError(ValueError):
    """Raised when an alphabet declaration or a symbol is invalid."""


class CapacityError(RuntimeError):
    """Raised when a construction exceeds its configured size cap."""


@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class NegAtom(Formula):
    name: str


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    child: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    """Shorthand for ``true U child``; all semantic operations unfold it."""

    child: Formula


TRUE = TrueF()
FALSE = FalseF()


def fmt(f: Formula) -> str:
    """Serialize a formula in the concrete syntax accepted by :func:`parse`."""
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, NegAtom):
        return f"!{f.name}"
    if isinstance(f, And):
        return f"({fmt(f.left)} & {fmt(f.right)})"
    if isinstance(f, Or):
        return f"({fmt(f.left)} | {fmt(f.right)})"
    if isinstance(f, Next):
        return f"X ({fmt(f.child)})"
    if isinstance(f, Until):
        return f"({fmt(f.left)} U {fmt(f.right)})"
    if isinstance(f, Eventually):
        return f"F ({fmt(f.child)})"
    raise TypeError(f"not a formula: {f!r}")


def _key(f: Formula) -> str:
    # Identity key: Eventually is unfolded so F g and (true U g) coincide.
    if isinstance(f, TrueF):
        return "1"
    if isinstance(f, FalseF):
        return "0"
    if isinstance(f, Atom):
        return f"a:{f.name}"
    if isinstance(f, NegAtom):
        return f"n:{f.name}"
    if isinstance(f, And):
        return f"&({_key(f.left)},{_key(f.right)})"
    if isinstance(f, Or):
        return f"|({_key(f.left)},{_key(f.right)})"
    if isinstance(f, Next):
        return f"X({_key(f.child)})"
    if isinstance(f, Until):
        return f"U({_key(f.left)},{_key(f.right)})"
    if isinstance(f, Eventually):
        return f"U(1,{_key(f.child)})"
    raise TypeError(f"not a formula: {f!r}")


def atoms_of(f: Formula) -> frozenset[str]:
    if isinstance(f, (Atom, NegAtom)):
        return frozenset({f.name})
    if isinstance(f, (And, Or, Until)):
        return atoms_of(f.left) | atoms_of(f.right)
    if isinstance(f, Next):
        return atoms_of(f.child)
    if isinstance(f, Eventually):
        return atoms_of(f.child)
    return frozenset()


def declare_alphabet(names) -> tuple[str, ...]:
    """Validate and order an atomic-proposition declaration.

    Names must be nonempty identifiers (letters, digits, underscore, not
    starting with a digit), unique, and distinct from operator keywords.
    """
    seen = []
    for name in names:
        if not isinstance(name, str) or not name:
            raise AlphabetError(f"invalid proposition name: {name!r}")
        if not (name[0].isalpha() or name[0] == "_"):
            raise AlphabetError(f"invalid proposition name: {name!r}")
        if not all(c.isalnum() or c == "_" for c in name):
            raise AlphabetError(f"invalid proposition name: {name!r}")
        if name in RESERVED_WORDS:
            raise AlphabetError(f"proposition name collides with keyword: {name!r}")
        if name in seen:
            raise AlphabetError(f"duplicate proposition name: {name!r}")
        seen.append(name)
    return tuple(sorted(seen))


def all_symbols(alphabet: tuple[str, ...]) -> list[frozenset[str]]:
    """Enumerate the full alphabet 2^AP in a deterministic order."""
    if len(alphabet) > MAX_ALPHABET_ATOMS:
        raise AlphabetError(
            f"alphabet too large: {len(alphabet)} atoms (limit {MAX_ALPHABET_ATOMS})"
        )
    ordered = sorted(alphabet)
    syms = []
    for r in range(len(ordered) + 1):
        for combo in itertools.combinations(ordered, r):
            syms.append(frozenset(combo))
    return syms


# ---------------------------------------------------------------------------
# Parser
#
# Grammar (loosest binding last):  disj := conj ('|' conj)*
#                                  conj := until ('&' until)*
#                                  until := unary ('U' until)?      right-assoc
#                                  unary := ('!'|'X'|'F') unary | primary
#                                  primary := 'true' | IDENT | '(' disj ')'
#
# The tokens X and F double as proposition names (region names in the bundled
# examples include F).  They are read as prefix operators exactly when the
# next token can start a formula, otherwise as atoms.
# ---------------------------------------------------------------------------

_PUNCT = "!&|()"


def _tokenize(text: str):
    tokens = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _PUNCT:
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            tokens.append(("ident", word, i))
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens, alphabet):
        self.tokens = tokens
        self.pos = 0
        self.alphabet = frozenset(alphabet)

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def _starts_formula(self, tok):
        kind, value, _ = tok
        if kind in ("(", "!"):
            return True
        return kind == "ident"

    def _is_prefix_op(self, tok):
        # X / F act as operators only if an operand follows.
        kind, value, _ = tok
        if kind != "ident" or value not in ("X", "F"):
            return False
        return self._starts_formula(self.tokens[self.pos + 1])

    def parse_disj(self):
        f = self.parse_conj()
        while self.peek()[0] == "|":
            self.advance()
            f = Or(f, self.parse_conj())
        return f

    def parse_conj(self):
        f = self.parse_until()
        while self.peek()[0] == "&":
            self.advance()
            f = And(f, self.parse_until())
        return f

    def parse_until(self):
        f = self.parse_unary()
        tok = self.peek()
        if tok[0] == "ident" and tok[1] == "U" and self._starts_formula(self.tokens[self.pos + 1]):
            self.advance()
            return Until(f, self.parse_until())
        return f

    def parse_unary(self):
        tok = self.peek()
        if tok[0] == "!":
            self.advance()
            operand = self.parse_unary()
            return _negate(operand, tok[2])
        if self._is_prefix_op(tok):
            self.advance()
            child = self.parse_unary()
            if tok[1] == "X":
                return Next(child)
            return Eventually(child)
        return self.parse_primary()

    def parse_primary(self):
        kind, value, pos = self.advance()
        if kind == "(":
            f = self.parse_disj()
            closing = self.advance()
            if closing[0] != ")":
                raise ParseError("expected ')'", closing[2])
            return f
        if kind == "ident":
            if value == "true":
                return TRUE
            if value == "U":
                raise ParseError("'U' is not a proposition", pos)
            if value not in self.alphabet:
                raise ParseError(f"undeclared proposition {value!r}", pos)
            return Atom(value)
        raise ParseError(f"unexpected token {value!r}", pos)


def _negate(f: Formula, pos: int) -> Formula:
    """Push one negation to the literals, De Morgan style."""
    if isinstance(f, Atom):
        return NegAtom(f.name)
    if isinstance(f, NegAtom):
        return Atom(f.name)
    if isinstance(f, And):
        return Or(_negate(f.left, pos), _negate(f.right, pos))
    if isinstance(f, Or):
        return And(_negate(f.left, pos), _negate(f.right, pos))
    if isinstance(f, (Next, Until, Eventually)):
        raise ParseError("negation over a temporal operator is outside the fragment", pos)
    if isinstance(f, TrueF):
        raise ParseError("cannot negate 'true'", pos)
    raise ParseError("cannot negate this subformula", pos)


def parse(text: str, alphabet) -> Formula:
    """Parse concrete formula syntax over a declared alphabet.

    Raises :class:`ParseError` on syntax errors, undeclared propositions,
    and negation applied over a temporal operator.
    """
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty formula", 0)
    declared = declare_alphabet(alphabet)
    parser = _Parser(_tokenize(text), declared)
    f = parser.parse_disj()
    tok = parser.peek()
    if tok[0] != "eof":
        raise ParseError(f"unexpected trailing token {tok[1]!r}", tok[2])
    return f


# ---------------------------------------------------------------------------
# Progression and canonical forms
# ---------------------------------------------------------------------------


def _mk_and(a: Formula, b: Formula) -> Formula:
    if isinstance(a, FalseF) or isinstance(b, FalseF):
        return FALSE
    if isinstance(a, TrueF):
        return b
    if isinstance(b, TrueF):
        return a
    if a == b:
        return a
    return And(a, b)


def _mk_or(a: Formula, b: Formula) -> Formula:
    if isinstance(a, TrueF) or isinstance(b, TrueF):
        return TRUE
    if isinstance(a, FalseF):
        return b
    if isinstance(b, FalseF):
        return a
    if a == b:
        return a
    return Or(a, b)


def progress(f: Formula, sigma: frozenset) -> Formula:
    """One step of formula progression over the symbol ``sigma``.

    Total on NNF formulas; constants absorb per the Boolean laws, so the
    result is the constant-folded residual obligation after reading sigma.
    """
    if isinstance(f, TrueF) or isinstance(f, FalseF):
        return f
    if isinstance(f, Atom):
        return TRUE if f.name in sigma else FALSE
    if isinstance(f, NegAtom):
        return FALSE if f.name in sigma else TRUE
    if isinstance(f, And):
        return _mk_and(progress(f.left, sigma), progress(f.right, sigma))
    if isinstance(f, Or):
        return _mk_or(progress(f.left, sigma), progress(f.right, sigma))
    if isinstance(f, Next):
        return f.child
    if isinstance(f, Until):
        return _mk_or(progress(f.right, sigma), _mk_and(progress(f.left, sigma), f))
    if isinstance(f, Eventually):
        return _mk_or(progress(f.child, sigma), f)
    raise TypeError(f"not a formula: {f!r}")


def _temporal_atoms(f: Formula, acc: dict):
    """Collect maximal subformulas rooted at a literal, Next or Until."""
    if isinstance(f, (TrueF, FalseF)):
        return
    if isinstance(f, (Atom, NegAtom, Next, Until, Eventually)):
        acc.setdefault(_key(f), f)
        return
    if isinstance(f, (And, Or)):
        _temporal_atoms(f.left, acc)
        _temporal_atoms(f.right, acc)
        return
    raise TypeError(f"not a formula: {f!r}")


def _subst(f: Formula, target_key: str, value: Formula) -> Formula:
    """Replace every temporal atom with key ``target_key`` by a constant."""
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, (Atom, NegAtom, Next, Until, Eventually)):
        return value if _key(f) == target_key else f
    if isinstance(f, And):
        return _mk_and(_subst(f.left, target_key, value), _subst(f.right, target_key, value))
    if isinstance(f, Or):
        return _mk_or(_subst(f.left, target_key, value), _subst(f.right, target_key, value))
    raise TypeError(f"not a formula: {f!r}")


def _fold(f: Formula) -> Formula:
    """Constant-fold the Boolean skeleton (temporal atoms stay opaque)."""
    if isinstance(f, And):
        return _mk_and(_fold(f.left), _fold(f.right))
    if isinstance(f, Or):
        return _mk_or(_fold(f.left), _fold(f.right))
    return f


def canonicalize(f: Formula) -> Formula:
    """Reduced ordered Shannon normal form over temporal atoms.

    Temporal atoms are ordered lexicographically by their serialized form;
    two formulas denote the same DFA state iff their canonical forms are
    structurally identical.  The Boolean skeleton above the temporal atoms is
    negation-free, so the expansion (t & hi) | lo stays inside NNF.
    """
    f = _fold(f)
    acc: dict = {}
    _temporal_atoms(f, acc)
    order = sorted(acc)

    @functools.lru_cache(maxsize=None)
    def build(g_key: str, g: Formula, idx: int) -> Formula:
        if isinstance(g, (TrueF, FalseF)) or idx == len(order):
            return g
        var_key = order[idx]
        var = acc[var_key]
        hi = build_entry(_subst(g, var_key, TRUE), idx + 1)
        lo = build_entry(_subst(g, var_key, FALSE), idx + 1)
        if hi == lo:
            return hi
        return _mk_or(_mk_and(var, hi), lo)

    def build_entry(g: Formula, idx: int) -> Formula:
        return build(_key(g), g, idx)

    return build_entry(f, 0)


# ---------------------------------------------------------------------------
# DFA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dfa:
    """Complete DFA over 2^AP with absorbing accepting states.

    ``states`` holds display labels; ``transitions`` maps (state index,
    symbol) to a state index and is total on states x alphabet.
    """

    alphabet: tuple[str, ...]
    states: tuple[str, ...]
    symbols: tuple[frozenset, ...]
    transitions: dict
    initial: int
    accepting: frozenset

    def step(self, state: int, sigma: frozenset) -> int:
        try:
            return self.transitions[(state, sigma)]
        except KeyError:
            raise AlphabetError(f"symbol {set(sigma)!r} outside the alphabet") from None

    def run(self, word) -> int:
        q = self.initial
        for sigma in word:
            q = self.step(q, frozenset(sigma))
        return q


def to_dfa(f: Formula, alphabet, state_cap: int = DEFAULT_STATE_CAP) -> Dfa:
    """Translate an NNF formula to a complete DFA accepting its good prefixes.

    States are canonical progressed formulas; ``true`` is the accepting
    absorbing state and ``false`` the completion sink.
    """
    declared = declare_alphabet(alphabet)
    undeclared = atoms_of(f) - set(declared)
    if undeclared:
        raise AlphabetError(f"formula uses undeclared propositions: {sorted(undeclared)}")
    syms = all_symbols(declared)

    init = canonicalize(f)
    index = {_key(init): 0}
    reps = [init]
    transitions = {}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        rep = reps[i]
        for sigma in syms:
            nxt = canonicalize(progress(rep, sigma))
            k = _key(nxt)
            j = index.get(k)
            if j is None:
                j = len(reps)
                if j >= state_cap:
                    raise CapacityError(f"DFA construction exceeded {state_cap} states")
                index[k] = j
                reps.append(nxt)
                frontier.append(j)
            transitions[(i, sigma)] = j
    accepting = frozenset(i for i, rep in enumerate(reps) if isinstance(rep, TrueF))
    return Dfa(
        alphabet=declared,
        states=tuple(fmt(rep) for rep in reps),
        symbols=tuple(syms),
        transitions=transitions,
        initial=0,
        accepting=accepting,
    )


def accepts(dfa: Dfa, word) -> bool:
    return dfa.run(word) in dfa.accepting


def good_prefix_oracle(f: Formula, word) -> bool:
    """Decide good-prefix satisfaction by direct recursion on positions.

    Strong finite-trace semantics: literals need a real position, Next
    consumes one letter, Until must be fulfilled within the word.  The
    constant ``true`` alone holds at the past-the-end position, so a Next
    whose obligation is already discharged (``X true``) succeeds on the last
    letter.  Kept automaton-free on purpose so it can serve as an
    independent check of :func:`to_dfa`.
    """
    w = [frozenset(sigma) for sigma in word]
    n = len(w)
    memo: dict = {}

    def ev(g: Formula, i: int) -> bool:
        key = (_key(g), i)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if isinstance(g, TrueF):
            res = True
        elif isinstance(g, FalseF):
            res = False
        elif isinstance(g, Atom):
            res = i < n and g.name in w[i]
        elif isinstance(g, NegAtom):
            res = i < n and g.name not in w[i]
        elif isinstance(g, And):
            res = ev(g.left, i) and ev(g.right, i)
        elif isinstance(g, Or):
            res = ev(g.left, i) or ev(g.right, i)
        elif isinstance(g, Next):
            res = i < n and ev(g.child, i + 1)
        elif isinstance(g, Until):
            res = any(
                ev(g.right, k) and all(ev(g.left, j) for j in range(i, k))
                for k in range(i, n)
            )
        elif isinstance(g, Eventually):
            res = any(ev(g.child, k) for k in range(i, n))
        else:
            raise TypeError(f"not a formula: {g!r}")
        memo[key] = res
        return res

    return ev(f, 0)


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def _symbol_list(sigma: frozenset) -> list[str]:
    return sorted(sigma)


def dfa_to_json(dfa: Dfa) -> dict:
    return {
        "alphabet": list(dfa.alphabet),
        "states": [{"id": i, "label": label} for i, label in enumerate(dfa.states)],
        "initial": dfa.initial,
        "accepting": sorted(dfa.accepting),
        "transitions": [
            {"from": i, "symbol": _symbol_list(sigma), "to": dfa.transitions[(i, sigma)]}
            for i in range(len(dfa.states))
            for sigma in dfa.symbols
        ],
    }


def dfa_from_json(doc: dict) -> Dfa:
    alphabet = declare_alphabet(doc["alphabet"])
    states = tuple(entry["label"] for entry in sorted(doc["states"], key=lambda e: e["id"]))
    syms = all_symbols(alphabet)
    transitions = {}
    for entry in doc["transitions"]:
        transitions[(entry["from"], frozenset(entry["symbol"]))] = entry["to"]
    for i in range(len(states)):
        for sigma in syms:
            if (i, sigma) not in transitions:
                raise ValueError(f"transition missing for state {i}, symbol {sorted(sigma)}")
    return Dfa(
        alphabet=alphabet,
        states=states,
        symbols=tuple(syms),
        transitions=transitions,
        initial=doc["initial"],
        accepting=frozenset(doc["accepting"]),
    )


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def dfa_to_dot(dfa: Dfa) -> str:
    lines = ["digraph dfa {", "  rankdir=LR;"]
    for i, label in enumerate(dfa.states):
        shape = "doublecircle" if i in dfa.accepting else "circle"
        lines.append(f'  q{i} [shape={shape} label="{_dot_escape(label)}"];')
    lines.append(f"  init [shape=point]; init -> q{dfa.initial};")
    # Group parallel edges by target to keep the output readable.
    for i in range(len(dfa.states)):
        by_target: dict = {}
        for sigma in dfa.symbols:
            j = dfa.transitions[(i, sigma)]
            by_target.setdefault(j, []).append("{%s}" % ",".join(sorted(sigma)))
        for j, labels in sorted(by_target.items()):
            lines.append(f'  q{i} -> q{j} [label="{_dot_escape(" ".join(labels))}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
