"""Learning-based hybrid controllers for control-affine systems under co-safe LTL tasks."""

__version__ = "0.1.0"

from .formula import parse_formula, satisfies_finite, good_prefix  # noqa: E402
from .automaton import compile_formula, compute_dta, accepts, policy_set, select_observation  # noqa: E402
from .scenario import Scenario, load_scenario, ValidationError, ParseError  # noqa: E402
from .hybrid import run, check_eventuality, check_certificate, TrajectoryLog  # noqa: E402

__all__ = [
    "__version__", "parse_formula", "satisfies_finite", "good_prefix", "compile_formula",
    "compute_dta", "accepts", "policy_set", "select_observation", "Scenario", "load_scenario",
    "ValidationError", "ParseError", "run", "check_eventuality", "check_certificate",
    "TrajectoryLog",
]
