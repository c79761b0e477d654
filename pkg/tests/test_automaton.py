import itertools
import math
from collections import deque

import numpy as np
import pytest

from hybrid_scltl.automaton import (DONE, EmptyLanguage, EmptyPolicySet, accepts, admissible,
                                    compile_formula, compute_dta, export_dot, forbidden,
                                    next_observation, policy_set, select_observation)
from hybrid_scltl.formula import good_prefix, parse_formula
from hybrid_scltl.plant import RoiSet
from hybrid_scltl.scenario import load_scenario

BENCH_ALPHABET = ["o1", "o2", "o3", "o4", "o5"]


@pytest.fixture(scope="module")
def bench():
    sc = load_scenario("benchmark2d")
    fsa = compile_formula(parse_formula(sc.formula, sc.alphabet), sc.alphabet)
    return fsa, compute_dta(fsa)


def test_benchmark_structure(bench):
    fsa, _ = bench
    assert fsa.n_states == 5
    step = fsa.step
    assert step(0, "o3") == 0 and step(0, "o1") == 1 and step(0, "o2") == 2
    assert step(1, "o1") == 1 and step(1, "o3") == 1 and step(1, "o2") == 3
    assert step(2, "o2") == 2 and step(2, "o3") == 2 and step(2, "o1") == 3
    assert step(3, "o1") == 3 and step(3, "o2") == 3 and step(3, "o3") == 4
    assert fsa.accepting == frozenset({4})
    for o in BENCH_ALPHABET:
        assert step(4, o) == 4
    for s in range(4):
        assert forbidden(fsa, s) == {"o4", "o5"}


def test_literal_text_of_benchmark_formula_parses():
    text = "F(F(o1 & F o2) | F(o2 & F o1) & o3) & ((!o4 & !o5) U o3)"
    fsa = compile_formula(parse_formula(text, BENCH_ALPHABET), BENCH_ALPHABET)
    assert fsa.n_states >= 2


def _bfs_dta(fsa):
    """Reverse breadth-first search from the accepting states."""
    preds = {s: set() for s in fsa.states}
    for (s, _), t in fsa.transitions.items():
        preds[t].add(s)
    dist = {s: 0 for s in fsa.accepting}
    queue = deque(fsa.accepting)
    while queue:
        t = queue.popleft()
        for s in preds[t]:
            if s not in dist:
                dist[s] = dist[t] + 1
                queue.append(s)
    return {s: dist.get(s, math.inf) for s in fsa.states}


def test_benchmark_dta(bench):
    fsa, dta = bench
    assert dta == {0: 3, 1: 2, 2: 2, 3: 1, 4: 0}
    assert dta == _bfs_dta(fsa)


def test_policy_sets(bench):
    fsa, dta = bench
    assert policy_set(fsa, dta, 0) == ["o1", "o2"]
    assert policy_set(fsa, dta, 1) == ["o2"]
    assert policy_set(fsa, dta, 2) == ["o1"]
    assert policy_set(fsa, dta, 3) == ["o3"]


def test_tiebreaks(bench):
    fsa, dta = bench
    assert select_observation(fsa, dta, 0) == "o1"
    rois = RoiSet.disks([{"name": "o1", "center": [-1, 1], "radius": 0.5},
                         {"name": "o2", "center": [1, 1], "radius": 0.5}])
    assert select_observation(fsa, dta, 0, "nearest-roi", x=np.array([2.0, 1.0]), rois=rois) == "o2"
    assert select_observation(fsa, dta, 0, "fixed-word", word=["o2", "o1", "o3"], position=0) == "o2"
    with pytest.raises(EmptyPolicySet):
        select_observation(fsa, dta, 0, "fixed-word", word=["o3"], position=0)
    assert select_observation(fsa, dta, 4) == DONE
    assert next_observation(fsa, dta, 0, "o1") == "o2"
    assert next_observation(fsa, dta, 3, "o3") == DONE


def test_infeasible_formula():
    with pytest.raises(EmptyLanguage):
        compile_formula(parse_formula("a & b", ["a", "b"]), ["a", "b"])


def test_true_formula_accepts_after_one_letter():
    # words are non-empty, so even T needs one observation
    fsa = compile_formula(parse_formula("T", ["a"]), ["a"])
    assert fsa.n_states == 2
    assert fsa.initial not in fsa.accepting
    assert compute_dta(fsa) == {0: 1, 1: 0}


def test_dot_export(bench):
    fsa, _ = bench
    dot = export_dot(fsa)
    assert dot.startswith("digraph")
    assert "doublecircle" in dot
    assert dot.count("->") >= 9


def test_admissible_is_complement_of_forbidden(bench):
    fsa, _ = bench
    for s in fsa.states:
        assert admissible(fsa, s) | forbidden(fsa, s) == set(BENCH_ALPHABET)
        assert not admissible(fsa, s) & forbidden(fsa, s)


def _feasible_random(formula_gen, seed, count, max_letters=4):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        k = int(rng.integers(2, max_letters + 1))
        alphabet = [f"p{i}" for i in range(k)]
        phi = formula_gen(rng, alphabet, 3)
        try:
            fsa = compile_formula(phi, alphabet)
        except EmptyLanguage:
            continue
        out.append((phi, alphabet, fsa))
    return out


def test_random_formulas_agree_with_oracle(formula_gen):
    for phi, alphabet, fsa in _feasible_random(formula_gen, 7, 25):
        for n in range(1, 5):
            for w in itertools.product(alphabet, repeat=n):
                assert accepts(fsa, w) == good_prefix(w, phi), (phi, w)


def test_dta_recurrence_on_random_automata(formula_gen):
    for _, _, fsa in _feasible_random(formula_gen, 11, 25):
        dta = compute_dta(fsa)
        assert dta == _bfs_dta(fsa)
        for s in fsa.states:
            if s in fsa.accepting:
                assert dta[s] == 0
            else:
                succ = [dta[t] for (q, _), t in fsa.transitions.items() if q == s]
                assert dta[s] == 1 + min(succ)


def test_minimality_no_equivalent_states(formula_gen):
    # distinct states must be distinguished by some word of length <= n_states
    for _, alphabet, fsa in _feasible_random(formula_gen, 3, 10, max_letters=3):
        signatures = {}
        for s in fsa.states:
            sig = []
            for n in range(0, fsa.n_states + 1):
                for w in itertools.product(alphabet, repeat=n):
                    q = s
                    for o in w:
                        q = fsa.step(q, o)
                        if q is None:
                            break
                    sig.append(q is not None and q in fsa.accepting)
            signatures[s] = tuple(sig)
        assert len(set(signatures.values())) == fsa.n_states
