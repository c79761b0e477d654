"""Deterministic automata for scLTL good prefixes, distance to acceptance, and
the discrete observation policy.

Compilation pipeline: each formula expands into ``(letters, obligations)``
pairs (letters allowed now, formulas owed by the rest of the word); sets of
obligations are the states of a nondeterministic machine, which is
determinised by subset construction, pruned of states that cannot reach
acceptance, and minimised by partition refinement. The accepting state is
absorbing because good prefixes stay good under extension.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np

from .formula import (And, Eventually, Formula, NegObs, Next, Obs, Or, TrueF,
                      Until)

__all__ = [
    "Fsa", "EmptyLanguage", "EmptyPolicySet", "DONE", "compile_formula",
    "accepts", "admissible", "forbidden", "compute_dta", "policy_set",
    "select_observation", "next_observation", "export_dot",
]

DONE = "done"


class EmptyLanguage(ValueError):
    """The formula has no good prefix over the alphabet (infeasible)."""


class EmptyPolicySet(RuntimeError):
    """No admissible observation decreases the distance to acceptance."""


@dataclass(frozen=True)
class Fsa:
    """Partial deterministic automaton. States are ``0..n_states-1``; 0 is initial."""

    alphabet: tuple
    n_states: int
    transitions: Mapping  # (state, observation) -> state
    accepting: frozenset
    initial: int = 0

    @property
    def states(self):
        return range(self.n_states)

    def name(self, s):
        return f"s{s}"

    def step(self, s, o) -> Optional[int]:
        return self.transitions.get((s, o))

    def is_accepting(self, s):
        return s in self.accepting


# -- tableau expansion ------------------------------------------------------

def _expand(phi, alphabet):
    letters = frozenset(alphabet)
    return _expand_cached(phi, letters)


@lru_cache(maxsize=None)
def _expand_cached(phi, letters):
    """Disjunctive one-step unfolding of ``phi``.

    Returns a tuple of ``(allowed_letters, owed)`` pairs: ``phi`` holds on a
    word iff for some pair the first letter is allowed and the remaining
    (non-empty) suffix satisfies every formula in ``owed``. An empty ``owed``
    means ``phi`` is already satisfied by the first letter.
    """
    if isinstance(phi, TrueF):
        return ((letters, frozenset()),)
    if isinstance(phi, Obs):
        return ((letters & {phi.name}, frozenset()),)
    if isinstance(phi, NegObs):
        return ((letters - {phi.name}, frozenset()),)
    if isinstance(phi, Next):
        return ((letters, frozenset([phi.arg])),)
    if isinstance(phi, Or):
        return _expand_cached(phi.left, letters) + _expand_cached(phi.right, letters)
    if isinstance(phi, And):
        return _conjoin(_expand_cached(phi.left, letters), _expand_cached(phi.right, letters))
    if isinstance(phi, Until):
        now = _expand_cached(phi.right, letters)
        later = tuple((c, owed | {phi}) for c, owed in _expand_cached(phi.left, letters))
        return now + later
    if isinstance(phi, Eventually):
        return _expand_cached(Until(TrueF(), phi.arg), letters)
    raise TypeError(f"not a formula node: {phi!r}")


def _conjoin(xs, ys):
    out = []
    for cx, ox in xs:
        for cy, oy in ys:
            c = cx & cy
            if c:
                out.append((c, ox | oy))
    return tuple(out)


def _expand_obligations(owed, letters):
    terms = ((letters, frozenset()),)
    for phi in sorted(owed, key=repr):
        terms = _conjoin(terms, _expand_cached(phi, letters))
        if not terms:
            break
    return terms


# -- compilation ------------------------------------------------------------

def compile_formula(phi: Formula, alphabet: Sequence[str]) -> Fsa:
    """Minimal partial DFA accepting exactly the good prefixes of ``phi``."""
    alphabet = tuple(alphabet)
    if len(set(alphabet)) != len(alphabet):
        raise ValueError("alphabet names must be unique")
    letters = frozenset(alphabet)
    accept_key = "ACCEPT"

    # subset construction over obligation sets
    start = frozenset([frozenset([phi])])
    index = {start: 0}
    order = [start]
    delta = {}
    queue = deque([start])
    while queue:
        macro = queue.popleft()
        src = index[macro]
        if macro == accept_key:
            for o in alphabet:
                delta[(src, o)] = src
            continue
        succ = {o: set() for o in alphabet}
        for owed in macro:
            for cond, nxt in _expand_obligations(owed, letters):
                for o in cond:
                    succ[o].add(nxt)
        for o in alphabet:
            targets = succ[o]
            if not targets:
                continue
            key = accept_key if frozenset() in targets else frozenset(targets)
            if key not in index:
                index[key] = len(order)
                order.append(key)
                queue.append(key)
            delta[(src, o)] = index[key]

    n = len(order)
    accepting = {index[accept_key]} if accept_key in index else set()
    if not accepting:
        raise EmptyLanguage("formula has no good prefix over the given alphabet")

    # prune states that cannot reach acceptance
    live = _coreachable(n, delta, accepting)
    if 0 not in live:
        raise EmptyLanguage("acceptance is unreachable from the initial state")
    delta = {(s, o): t for (s, o), t in delta.items() if s in live and t in live}

    # partition refinement; a missing transition maps to class -1
    cls = {s: (1 if s in accepting else 0) for s in live}
    while True:
        sigs = {s: (cls[s],) + tuple(cls.get(delta.get((s, o)), -1) for o in alphabet)
                for s in live}
        ids = {}
        new = {s: ids.setdefault(sigs[s], len(ids)) for s in sorted(live)}
        if len(ids) == len(set(cls.values())):
            cls = new
            break
        cls = new

    # canonical numbering: BFS from the initial class, letters in alphabet order
    qdelta = {(cls[s], o): cls[t] for (s, o), t in delta.items()}
    rename = {cls[0]: 0}
    queue = deque([cls[0]])
    while queue:
        c = queue.popleft()
        for o in alphabet:
            t = qdelta.get((c, o))
            if t is not None and t not in rename:
                rename[t] = len(rename)
                queue.append(t)
    transitions = {(rename[c], o): rename[t] for (c, o), t in qdelta.items() if c in rename}
    acc = frozenset(rename[cls[s]] for s in accepting)
    return Fsa(alphabet=alphabet, n_states=len(rename), transitions=transitions, accepting=acc)


def _coreachable(n, delta, targets):
    preds = {s: set() for s in range(n)}
    for (s, _o), t in delta.items():
        preds[t].add(s)
    seen = set(targets)
    queue = deque(targets)
    while queue:
        t = queue.popleft()
        for s in preds[t]:
            if s not in seen:
                seen.add(s)
                queue.append(s)
    return seen


# -- queries ----------------------------------------------------------------

def accepts(fsa: Fsa, word: Sequence[str]) -> bool:
    s = fsa.initial
    for o in word:
        s = fsa.step(s, o)
        if s is None:
            return False
        if s in fsa.accepting:
            return True
    return False


def admissible(fsa: Fsa, s: int) -> frozenset:
    return frozenset(o for o in fsa.alphabet if (s, o) in fsa.transitions)


def forbidden(fsa: Fsa, s: int) -> frozenset:
    """Observations whose occurrence at ``s`` makes acceptance impossible."""
    return frozenset(fsa.alphabet) - admissible(fsa, s)


def compute_dta(fsa: Fsa) -> dict:
    """Distance to acceptance: minimum number of transitions into the accepting set."""
    preds = {s: set() for s in fsa.states}
    for (s, _o), t in fsa.transitions.items():
        preds[t].add(s)
    dist = {s: math.inf for s in fsa.states}
    queue = deque()
    for s in sorted(fsa.accepting):
        dist[s] = 0
        queue.append(s)
    while queue:
        t = queue.popleft()
        for s in sorted(preds[t]):
            if dist[s] == math.inf:
                dist[s] = dist[t] + 1
                queue.append(s)
    return dist


def policy_set(fsa: Fsa, dta: Mapping, s: int) -> list:
    """Admissible observations at ``s`` whose successor is strictly closer to acceptance."""
    return [o for o in fsa.alphabet
            if (s, o) in fsa.transitions and dta[fsa.transitions[(s, o)]] < dta[s]]


def select_observation(fsa: Fsa, dta: Mapping, s: int, tiebreak="lexicographic", *,
                       x=None, rois=None, word=None, position=0):
    """Pick the next target observation at automaton state ``s``.

    ``tiebreak`` is ``"lexicographic"`` (alphabet order), ``"nearest-roi"``
    (needs ``x`` and ``rois``) or ``"fixed-word"`` (needs ``word``; the entry
    at ``position`` must be in the policy set).
    """
    if s in fsa.accepting:
        return DONE
    options = policy_set(fsa, dta, s)
    if not options:
        raise EmptyPolicySet(f"no distance-decreasing observation at {fsa.name(s)}")
    if tiebreak == "lexicographic":
        return options[0]
    if tiebreak == "nearest-roi":
        if x is None or rois is None:
            raise ValueError("nearest-roi tiebreak needs x and rois")
        x = np.asarray(x, dtype=float)
        return min(options, key=lambda o: (float(np.linalg.norm(x - rois[o].center)), o))
    if tiebreak == "fixed-word":
        if word is None:
            raise ValueError("fixed-word tiebreak needs a word")
        if position >= len(word):
            raise EmptyPolicySet(f"fixed word {list(word)} exhausted at position {position}")
        o = word[position]
        if o not in options:
            raise EmptyPolicySet(
                f"fixed word letter {o!r} at position {position} is not distance-decreasing "
                f"at {fsa.name(s)} (options: {options})")
        return o
    raise ValueError(f"unknown tiebreak {tiebreak!r}")


def next_observation(fsa: Fsa, dta: Mapping, s: int, o: str, tiebreak="lexicographic", **context):
    """Observation to target after consuming ``o`` at ``s``; ``DONE`` on acceptance."""
    succ = fsa.step(s, o)
    if succ is None:
        raise ValueError(f"{o!r} is not admissible at {fsa.name(s)}")
    return select_observation(fsa, dta, succ, tiebreak, **context)


def export_dot(fsa: Fsa) -> str:
    lines = ["digraph fsa {", "  rankdir=LR;", '  __start [shape=point, label=""];']
    for s in fsa.states:
        shape = "doublecircle" if s in fsa.accepting else "circle"
        lines.append(f'  {fsa.name(s)} [shape={shape}, label="{fsa.name(s)}"];')
    lines.append(f"  __start -> {fsa.name(fsa.initial)};")
    edges = {}
    for s in fsa.states:
        for o in fsa.alphabet:
            t = fsa.step(s, o)
            if t is not None:
                edges.setdefault((s, t), []).append(o)
    for (s, t), labels in sorted(edges.items()):
        lines.append(f'  {fsa.name(s)} -> {fsa.name(t)} [label="{",".join(labels)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
