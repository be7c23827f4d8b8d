"""Compact forecasting-based anomaly detection for univariate time series.

A window is expanded into fixed univariate basis functions, mixed by a small
depthwise CNN and projected to a one-step forecast; the absolute forecast
error is the anomaly score.
"""

from .basis import BasisKind, FeatureConfig, expand
from .detector import ScoreTrace, score_series
from .experiment import run_experiment
from .metrics import AdjustStrategy, EvalReport, auprc, best_f1, evaluate
from .model import ModelConfig, ModelParams, param_count
from .pipeline import Series, SplitSpec, SynthSpec, load_csv, synthesize
from .trainer import TrainConfig, multi_run, train

__version__ = "0.1.0"

__all__ = [
    "AdjustStrategy", "BasisKind", "EvalReport", "FeatureConfig", "ModelConfig",
    "ModelParams", "ScoreTrace", "Series", "SplitSpec", "SynthSpec", "TrainConfig",
    "auprc", "best_f1", "evaluate", "expand", "load_csv", "multi_run", "param_count",
    "run_experiment", "score_series", "synthesize", "train",
]
