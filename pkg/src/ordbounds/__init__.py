"""Sharp nonparametric bounds on probability of benefit, no harm and relative effect
for ordinal outcomes, in randomized, confounded and instrumental-variable settings."""

from .errors import *  # noqa: F401,F403
from .model import (  # noqa: F401
    ALL_SETTINGS,
    CONFOUNDED,
    ESTIMANDS,
    IV,
    IV_NO_DEFIERS,
    RANDOMIZED,
    AffineExpression,
    Estimand,
    Interval,
    ObservedLaw,
    OutcomeSpace,
    StudySetting,
    SymbolicBound,
    evaluate_bound,
    evaluate_exact,
    law_from_counts,
    validate_law,
)

__version__ = "0.1.0"
