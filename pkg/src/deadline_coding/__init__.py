"""Optimal erasure-coded channel allocation under frame deadlines, with UCB and Thompson-sampling learners."""

from .model import (
    IDLE,
    ArrivalDistribution,
    CodeDecision,
    ParamError,
    SystemParams,
    binomial_tail,
    point_arrivals,
    truncated_poisson_arrivals,
    uniform_arrivals,
)
from .dp import (
    PolicyEvaluation,
    PolicyTable,
    evaluate_policy,
    genie_values,
    pseudo_regret_increment,
    solve_policies,
    solve_policy,
)
from .sim import ExperimentConfig, LearnerSpec, RegretCurve, run_experiment, run_frame, run_replication

__version__ = "0.1.0"
