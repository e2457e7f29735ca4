"""Inference for multi-armed bandits with arm-dependent delayed feedback."""

__version__ = "0.1.0"

from .config import ExperimentConfig, config_from_dict, study_config, parse_config
from .env import (
    DelaySpec,
    NegativeBinomialDelay,
    OutcomeSpec,
    RoundedParetoDelay,
    Trajectory,
    TrajectoryRecord,
    ZeroDelay,
    arrivals_up_to,
    sample_delay,
    simulate,
    simulate_batch,
    step,
)
from .errors import ConfigError, DataError, NoObservationError, PositivityError
from .estimators import EstimateReport, daipw_arm, evaluate_all, p_hat, variance_hat
from .montecarlo import aggregate, run_experiment, run_replication
from .policies import PolicyConfig, PolicyState
from .weighting import compute_weights, condition_diagnostics
