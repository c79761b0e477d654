import numpy as np
import pytest

from hybrid_scltl.formula import And, Eventually, Next, NegObs, Obs, Or, TrueF, Until
from hybrid_scltl.hybrid import Engine
from hybrid_scltl.scenario import load_scenario

BENCH_WORDS = (("o1", "o2", "o3"), ("o2", "o1", "o3"))


def random_formula(rng, alphabet, depth):
    """Random positive-normal-form formula (negation only on observations)."""
    if depth == 0 or rng.random() < 0.25:
        r = rng.random()
        name = alphabet[rng.integers(len(alphabet))]
        if r < 0.6:
            return Obs(name)
        if r < 0.9:
            return NegObs(name)
        return TrueF()
    op = rng.integers(6)
    if op == 0:
        return And(random_formula(rng, alphabet, depth - 1), random_formula(rng, alphabet, depth - 1))
    if op == 1:
        return Or(random_formula(rng, alphabet, depth - 1), random_formula(rng, alphabet, depth - 1))
    if op == 2:
        return Until(random_formula(rng, alphabet, depth - 1), random_formula(rng, alphabet, depth - 1))
    if op == 3:
        return Next(random_formula(rng, alphabet, depth - 1))
    return Eventually(random_formula(rng, alphabet, depth - 1))


@pytest.fixture(scope="session")
def formula_gen():
    return random_formula


@pytest.fixture(scope="session")
def bench_runs():
    """Both fixed-word benchmark runs, shared across test modules."""
    out = {}
    for word in BENCH_WORDS:
        engine = Engine(load_scenario("benchmark2d", {"tiebreak.word": list(word)}))
        out[word] = (engine, engine.run())
    return out


@pytest.fixture(scope="session")
def linear_run():
    engine = Engine(load_scenario("linear1d"))
    return engine, engine.run()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_RESULTS = {}


def record_criterion(number, passed, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture(scope="session")
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
