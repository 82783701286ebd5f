"""Learning to persuade a stream of receivers when the prior is unknown."""

from .core import (
    Instance,
    Margins,
    SignalingScheme,
    TieRule,
    best_response,
    compute_margins,
    expected_utility,
    is_persuasive,
    posterior_update,
    sender_utility,
)
from .learners import LEARNER_NAMES, make_learner
from .optimal import optimal_scheme_binary, optimal_scheme_general, optimal_value, scheme_from_strength
from .robustify import RobustificationParams, robustify
from .sim import gen_example_basic, gen_lower_bound_binary, gen_lower_bound_general, gen_random, run_episode

__all__ = [
    "Instance",
    "Margins",
    "SignalingScheme",
    "TieRule",
    "best_response",
    "compute_margins",
    "expected_utility",
    "is_persuasive",
    "posterior_update",
    "sender_utility",
    "LEARNER_NAMES",
    "make_learner",
    "optimal_scheme_binary",
    "optimal_scheme_general",
    "optimal_value",
    "scheme_from_strength",
    "RobustificationParams",
    "robustify",
    "gen_example_basic",
    "gen_lower_bound_binary",
    "gen_lower_bound_general",
    "gen_random",
    "run_episode",
]
