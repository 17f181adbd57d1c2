"""Formally certified explanations for small ReLU classifiers."""
from importlib.resources import files
from pathlib import Path

from .constraints import (Cube, ConstraintSystem, PredictionGoal, encode_goal_negation,
                          encode_network, toy_integer_system)
from .explain import (Explanation, Problem, cardinality_minimal, enumerate_explanations,
                      make_ordering, subset_minimal, validate_and_shrink)
from .hitset import HitInstance, minimum_hitting_set
from .model import Dataset, Instance, Network, forward, load_dataset, load_model, predict
from .oracle import OracleConfig, Query, entails, reference_entails

__version__ = "0.1.0"


def bundled(name: str) -> Path:
    """Path of a file shipped in the package data directory."""
    return Path(str(files(__name__).joinpath("data", name)))


__all__ = [
    "Cube", "ConstraintSystem", "PredictionGoal", "encode_goal_negation", "encode_network",
    "toy_integer_system", "Explanation", "Problem", "cardinality_minimal",
    "enumerate_explanations", "make_ordering", "subset_minimal", "validate_and_shrink",
    "HitInstance", "minimum_hitting_set", "Dataset", "Instance", "Network", "forward",
    "load_dataset", "load_model", "predict", "OracleConfig", "Query", "entails",
    "reference_entails", "bundled",
]
