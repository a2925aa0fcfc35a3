"""Simulate Byzantine-robust synchronous SGD and attack it by inner-product manipulation."""

from .aggregation import (AggregationOutcome, CoordinateWiseMedian, Krum, Mean,
                          aggregate, coordinate_median, krum, krum_score, krum_scores,
                          make_rule)
from .attacks import (NoAttack, OmniscientView, ScaledNegativeMean, craft, make_attack,
                      median_attack_recipe)
from .exceptions import (ConditionViolation, ConfigurationError, DimensionError,
                         NonFiniteError)
from .problems import (GaussianQuadratic, LogisticRegressionProblem,
                       make_logistic_problem, make_problem)
from .simulator import (ByzantineSGD, ExperimentConfig, IterationMetrics, RunTrace,
                        run_experiment, select_byzantine_indices, step)
from .vec import RngStream

__version__ = "0.1.0"
