"""Adaptive submodular meta-learning: two-phase policies, exact oracles and IC experiments."""
from .core import (
    ExplicitPrior,
    GenerativePrior,
    MixturePolicy,
    PartialRealization,
    Policy,
    Realization,
    Task,
    concat,
    expected_utility_exact,
    expected_utility_mc,
    f_avg,
    load_instance,
    run_policy,
    truncate,
)
from .estimation import ExactEstimator, MarginalEstimate, MonteCarloEstimator, make_estimator
from .estimators import (
    FullyAdaptiveGreedy,
    GreedyTrain,
    PiA,
    PiB,
    RandomizedMetaGreedy,
    TwoPhaseGreedy,
    TwoPhaseRandomizedGreedy,
    UniformRandom,
)
from .exceptions import AsmlError

__version__ = "0.1.0"
