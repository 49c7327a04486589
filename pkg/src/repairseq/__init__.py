"""Post-disaster repair sequencing with deep Q-learning, plus exact and GA baselines."""

__version__ = "0.1.0"

from .agents import Checkpoint, TrainConfig, mimo_defaults, substation_defaults, train
from .baselines import GaConfig, SequenceSolution, enumerate_optimal, ga_optimize, random_sequence
from .env import DamageScenario, RandomK, RecoveryEnv, ResilienceCurve, WorstCase, compute_lor, sample_scenario
from .evaluation import ComparisonReport, batch_eval, compare, cross_test, rollout
from .fixtures import load_fixture, load_system
from .functionality import BaySpec, Evaluator, FunctionalityEvaluator, FunctionalityModel, Part
from .network import SystemSpec

__all__ = [
    "BaySpec",
    "Checkpoint",
    "ComparisonReport",
    "DamageScenario",
    "Evaluator",
    "FunctionalityEvaluator",
    "FunctionalityModel",
    "GaConfig",
    "Part",
    "RandomK",
    "RecoveryEnv",
    "ResilienceCurve",
    "SequenceSolution",
    "SystemSpec",
    "TrainConfig",
    "WorstCase",
    "batch_eval",
    "compare",
    "compute_lor",
    "cross_test",
    "enumerate_optimal",
    "ga_optimize",
    "load_fixture",
    "load_system",
    "mimo_defaults",
    "random_sequence",
    "rollout",
    "sample_scenario",
    "substation_defaults",
    "train",
]
