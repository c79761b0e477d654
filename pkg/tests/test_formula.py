import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_scltl.formula import (And, EmptyWord, Eventually, FormulaSyntaxError,
                                  NegationOfNonObservation, Next, NegObs, Obs, Or, TrueF,
                                  UnknownObservation, Until, good_prefix, observations_of,
                                  parse_formula, satisfies_finite, subformulas, to_text)

AB = ["a", "b", "c"]


def test_parse_single_observation():
    assert parse_formula("a", AB) == Obs("a")


def test_precedence_until_weakest_and_right_assoc():
    phi = parse_formula("a & b | c U a U b", AB)
    assert phi == Until(Or(And(Obs("a"), Obs("b")), Obs("c")), Until(Obs("a"), Obs("b")))


def test_unary_operators_bind_tightest():
    assert parse_formula("F a & X !b", AB) == And(Eventually(Obs("a")), Next(NegObs("b")))
    assert parse_formula("F (a & T)", AB) == Eventually(And(Obs("a"), TrueF()))


def test_missing_operand_reports_position():
    with pytest.raises(FormulaSyntaxError) as info:
        parse_formula("F (a & )", AB)
    assert info.value.position == 7


def test_unbalanced_parenthesis():
    with pytest.raises(FormulaSyntaxError):
        parse_formula("(a | b", AB)


def test_trailing_garbage():
    with pytest.raises(FormulaSyntaxError):
        parse_formula("a b", AB)


def test_unknown_observation():
    with pytest.raises(UnknownObservation):
        parse_formula("F o9", AB)


def test_negation_only_on_observations():
    with pytest.raises(NegationOfNonObservation):
        parse_formula("!(a & b)", AB)
    with pytest.raises(NegationOfNonObservation):
        parse_formula("!F a", AB)


def test_alphabet_clashing_with_keyword():
    with pytest.raises(ValueError):
        parse_formula("F", ["F"])


def test_subformulas_postorder_and_observations():
    phi = parse_formula("(a U b) & F a", AB)
    subs = subformulas(phi)
    assert subs[-1] == phi
    for i, node in enumerate(subs):
        for child in getattr(node, "__dict__", {}).values():
            if child in subs:
                assert subs.index(child) < i
    assert observations_of(phi) == {"a", "b"}


# finite semantics, hand-checked cases
@pytest.mark.parametrize("text,word,expected", [
    ("a", "a", True),
    ("a", "ba", False),
    ("F a", "bca", True),
    ("F a", "bcc", False),
    ("X b", "ab", True),
    ("X b", "a", False),          # no next position in a word of length 1
    ("a U b", "aab", True),
    ("a U b", "acb", False),
    ("a U b", "b", True),
    ("a U b", "aaa", False),      # the right operand must actually occur
    ("!a U b", "cb", True),
    ("F (a & X b)", "cab", True),
    ("F (a & X b)", "cba", False),
    ("T", "c", True),
])
def test_satisfies_finite_cases(text, word, expected):
    assert satisfies_finite(list(word), parse_formula(text, AB)) is expected


def test_empty_word_rejected():
    with pytest.raises(EmptyWord):
        satisfies_finite([], Obs("a"))
    with pytest.raises(EmptyWord):
        good_prefix([], Obs("a"))


def test_good_prefix_examples():
    phi = parse_formula("F a & F b", AB)
    assert good_prefix(list("cab"), phi)
    assert good_prefix(list("abcc"), phi)
    assert not good_prefix(list("ccaa"), phi)


def _formulas(depth):
    leaf = st.sampled_from([Obs("a"), Obs("b"), NegObs("a"), NegObs("c"), TrueF()])
    if depth == 0:
        return leaf
    sub = _formulas(depth - 1)
    return st.one_of(
        leaf,
        st.builds(And, sub, sub), st.builds(Or, sub, sub), st.builds(Until, sub, sub),
        st.builds(Next, sub), st.builds(Eventually, sub))


@settings(max_examples=200, deadline=None)
@given(_formulas(3))
def test_to_text_round_trip(phi):
    assert parse_formula(to_text(phi), AB) == phi


@settings(max_examples=200, deadline=None)
@given(_formulas(3), st.lists(st.sampled_from(AB), min_size=1, max_size=5),
       st.lists(st.sampled_from(AB), max_size=3))
def test_good_prefix_is_monotone_under_extension(phi, word, extension):
    if good_prefix(word, phi):
        assert good_prefix(word + extension, phi)


@settings(max_examples=100, deadline=None)
@given(_formulas(3), st.lists(st.sampled_from(AB), min_size=1, max_size=5))
def test_satisfaction_monotone_so_good_prefix_equals_full_word(phi, word):
    # every operator is positive, so satisfaction survives extension
    assert good_prefix(word, phi) == satisfies_finite(word, phi)


def test_until_unrolling_identity():
    # a U b == b | (a & X (a U b)) on every word up to length 4
    a_u_b = parse_formula("a U b", AB)
    unrolled = parse_formula("b | (a & X (a U b))", AB)
    for n in range(1, 5):
        for w in itertools.product(AB, repeat=n):
            assert satisfies_finite(w, a_u_b) == satisfies_finite(w, unrolled)
