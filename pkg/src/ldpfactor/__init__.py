"""Optimized factorization mechanisms for linear queries under local differential privacy."""
from importlib import resources

from . import baselines, kernels, metrics, model, optimizer, workloads
from .metrics import (
    objective_LQ,
    optimal_V,
    per_type_variance,
    sample_complexity,
    svd_lower_bound,
    variance_report,
)
from .model import DataVector, StrategyMatrix, Workload, load_strategy, save_strategy, validate_strategy
from .optimizer import OptimizerConfig, optimize, project_strategy

__version__ = "0.1.0"


def fixture_path(name="rr_n2_ln3.csv"):
    """Path of a strategy file shipped with the package."""
    return resources.files(__name__).joinpath("fixtures", name)
