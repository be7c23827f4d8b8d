"""End-to-end run on one labeled series: fit preprocessing on the training
split, train, score the test split and evaluate.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import model as M
from .detector import ScoreTrace, score_series
from .metrics import EvalReport, evaluate
from .pipeline import Normalizer, Series, SplitSpec, WindowSet, make_windows
from .trainer import TrainConfig, TrainHistory, train


@dataclass
class ExperimentResult:
    params: M.ModelParams
    history: TrainHistory
    trace: ScoreTrace
    report: EvalReport | None


def split_windows(series: Series, split: SplitSpec, window_len: int, cte: bool):
    """Fit normalization on the training span and window the whole series.

    Windows are assigned to a split by the series index of their target, so
    validation windows may draw history from the training span.
    """
    a, b = split.boundaries(len(series))
    norm = Normalizer.fit(series.values[:a], cte=cte)
    windows = make_windows(norm.transform(series), window_len)
    target = windows.origin_index + norm.offset
    parts = (
        windows.select(target < a),
        windows.select((target >= a) & (target < b)),
        windows.select(target >= b),
    )
    return norm, parts


def run_experiment(
    series: Series,
    model_config: M.ModelConfig,
    train_cfg: TrainConfig,
    split: SplitSpec = SplitSpec(),
    cte: bool = True,
    k: int = 5,
) -> ExperimentResult:
    norm, (train_w, val_w, _) = split_windows(series, split, model_config.window_len, cte)
    params, history = train(model_config, train_cfg, train_w, val_w, norm)
    _, b = split.boundaries(len(series))
    if b >= len(series):
        return ExperimentResult(params, history, None, None)
    trace = score_series(params, series, start=b)
    report = evaluate(*trace.covered(), k=k)
    return ExperimentResult(params, history, trace, report)


def windows_for(series: Series, params: M.ModelParams) -> WindowSet:
    return make_windows(params.normalizer.transform(series), params.config.window_len)
