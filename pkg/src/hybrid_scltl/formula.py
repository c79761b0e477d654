"""scLTL formulas: syntax tree, text parser, and finite-word semantics.

Concrete syntax::

    T            true
    o1           observation
    !o1          negated observation (only allowed on observations)
    a & b        conjunction
    a | b        disjunction
    X a          next
    F a          eventually
    a U b        until (right associative)

Precedence, tightest first: unary operators, ``&``, ``|``, ``U``.

Words are sequences of observation names; a single observation holds per step.
"""
from __future__ import annotations

from functools import lru_cache
from dataclasses import dataclass
from typing import Sequence, Union

__all__ = [
    "TrueF", "Obs", "NegObs", "And", "Or", "Next", "Until", "Eventually",
    "Formula", "FormulaSyntaxError", "UnknownObservation",
    "NegationOfNonObservation", "EmptyWord", "parse_formula", "to_text",
    "satisfies_finite", "good_prefix", "subformulas", "observations_of",
]


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class Obs:
    name: str


@dataclass(frozen=True)
class NegObs:
    name: str


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Next:
    arg: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Eventually:
    arg: "Formula"


Formula = Union[TrueF, Obs, NegObs, And, Or, Next, Until, Eventually]


class FormulaSyntaxError(ValueError):
    """Malformed formula text. ``position`` is a character offset."""

    def __init__(self, message, position, expected=()):
        self.position = position
        self.expected = tuple(expected)
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at position {position}{detail}")


class UnknownObservation(ValueError):
    pass


class NegationOfNonObservation(FormulaSyntaxError):
    pass


class EmptyWord(ValueError):
    pass


_KEYWORDS = {"T", "X", "F", "U"}
_SYMBOLS = set("!&|()")


def _tokenize(text):
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in _SYMBOLS:
            tokens.append((ch, i))
            i += 1
        elif ch.isalnum() or ch == "_":
            start = i
            while i < len(text) and (text[i].isalnum() or text[i] == "_"):
                i += 1
            tokens.append((text[start:i], start))
        else:
            raise FormulaSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(("<end>", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, alphabet):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.alphabet = set(alphabet)

    def peek(self):
        return self.tokens[self.pos][0]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, value):
        tok, where = self.advance()
        if tok != value:
            raise FormulaSyntaxError(f"unexpected token {tok!r}", where, [value])

    def parse(self):
        node = self.until()
        tok, where = self.tokens[self.pos]
        if tok != "<end>":
            raise FormulaSyntaxError(f"unexpected token {tok!r}", where, ["&", "|", "U", "<end>"])
        return node

    def until(self):
        left = self.disjunction()
        if self.peek() == "U":
            self.advance()
            return Until(left, self.until())
        return left

    def disjunction(self):
        node = self.conjunction()
        while self.peek() == "|":
            self.advance()
            node = Or(node, self.conjunction())
        return node

    def conjunction(self):
        node = self.unary()
        while self.peek() == "&":
            self.advance()
            node = And(node, self.unary())
        return node

    def unary(self):
        tok, where = self.advance()
        if tok == "!":
            operand = self.unary()
            if not isinstance(operand, Obs):
                raise NegationOfNonObservation("negation applied to a non-observation", where)
            return NegObs(operand.name)
        if tok == "X":
            return Next(self.unary())
        if tok == "F":
            return Eventually(self.unary())
        if tok == "(":
            node = self.until()
            self.expect(")")
            return node
        if tok == "T":
            return TrueF()
        if tok in _KEYWORDS or tok in _SYMBOLS or tok == "<end>":
            raise FormulaSyntaxError(f"unexpected token {tok!r}", where,
                                     ["T", "!", "X", "F", "(", "<observation>"])
        if tok not in self.alphabet:
            raise UnknownObservation(f"observation {tok!r} at position {where} is not in the alphabet")
        return Obs(tok)


def parse_formula(text: str, alphabet: Sequence[str]) -> Formula:
    """Parse ``text`` into a formula over ``alphabet``.

    >>> parse_formula("F o1", ["o1"])
    Eventually(arg=Obs(name='o1'))
    """
    clash = _KEYWORDS.intersection(alphabet)
    if clash:
        raise ValueError(f"observation names clash with operators: {sorted(clash)}")
    return _Parser(text, alphabet).parse()


def to_text(phi: Formula) -> str:
    """Fully parenthesised text that parses back to the same tree."""
    if isinstance(phi, TrueF):
        return "T"
    if isinstance(phi, Obs):
        return phi.name
    if isinstance(phi, NegObs):
        return "!" + phi.name
    if isinstance(phi, Next):
        return f"X ({to_text(phi.arg)})"
    if isinstance(phi, Eventually):
        return f"F ({to_text(phi.arg)})"
    op = {And: "&", Or: "|", Until: "U"}[type(phi)]
    return f"({to_text(phi.left)}) {op} ({to_text(phi.right)})"


def subformulas(phi: Formula) -> list:
    """Post-order list of distinct subformulas (children before parents)."""
    return list(_subformulas(phi))


@lru_cache(maxsize=256)
def _subformulas(phi):
    out, seen = [], set()

    def walk(node):
        if node in seen:
            return
        for child in _children(node):
            walk(child)
        seen.add(node)
        out.append(node)

    walk(phi)
    return tuple(out)


def _children(node):
    if isinstance(node, (And, Or, Until)):
        return (node.left, node.right)
    if isinstance(node, (Next, Eventually)):
        return (node.arg,)
    return ()


def observations_of(phi: Formula) -> set:
    return {n.name for n in subformulas(phi) if isinstance(n, (Obs, NegObs))}


def satisfies_finite(word: Sequence[str], phi: Formula) -> bool:
    """Finite-word satisfaction ``word |= phi``, evaluated at the first position.

    Each subformula gets a truth table over suffix positions, filled children
    first. Until is evaluated directly from its definition: some position k
    satisfies the right operand and every earlier position from i satisfies
    the left operand.
    """
    word = tuple(word)
    if not word:
        raise EmptyWord("satisfaction is defined on non-empty words")
    n = len(word)
    table = {}
    for node in _subformulas(phi):
        if isinstance(node, TrueF):
            row = [True] * n
        elif isinstance(node, Obs):
            row = [w == node.name for w in word]
        elif isinstance(node, NegObs):
            row = [w != node.name for w in word]
        elif isinstance(node, And):
            a, b = table[node.left], table[node.right]
            row = [a[i] and b[i] for i in range(n)]
        elif isinstance(node, Or):
            a, b = table[node.left], table[node.right]
            row = [a[i] or b[i] for i in range(n)]
        elif isinstance(node, Next):
            a = table[node.arg]
            row = [i + 1 < n and a[i + 1] for i in range(n)]
        elif isinstance(node, Until):
            a, b = table[node.left], table[node.right]
            row = [any(b[k] and all(a[i:k]) for k in range(i, n)) for i in range(n)]
        elif isinstance(node, Eventually):
            a = table[node.arg]
            row = [any(a[i:]) for i in range(n)]
        else:
            raise TypeError(f"not a formula node: {node!r}")
        table[node] = row
    return table[phi][0]


def good_prefix(word: Sequence[str], phi: Formula) -> bool:
    """True iff some non-empty prefix of ``word`` satisfies ``phi``."""
    word = tuple(word)
    if not word:
        raise EmptyWord("good_prefix is defined on non-empty words")
    return any(satisfies_finite(word[:k], phi) for k in range(1, len(word) + 1))
