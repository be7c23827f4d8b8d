"""Mini-batch Adam training with validation-based early stopping."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import model as M
from . import ndcore as nd
from .basis import expand
from .pipeline import Normalizer, WindowSet

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 1024
    lr: float = 0.01
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    best_epoch: int = -1

    @property
    def epochs(self):
        return len(self.train_loss)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for i, (tr, va) in enumerate(zip(self.train_loss, self.val_loss)):
            writer.writerow([i, repr(float(tr)), repr(float(va))])
        return buf.getvalue()


def batches(n, batch_size, rng=None):
    """Index batches over ``n`` items; a trailing singleton joins the previous batch."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    cuts = list(range(0, n, batch_size))
    groups = [order[c: c + batch_size] for c in cuts]
    if len(groups) > 1 and len(groups[-1]) == 1:
        groups[-2] = np.concatenate(groups[-2:])
        groups.pop()
    return groups


def evaluate_mse(params, windows: WindowSet, features=None):
    """Inference-mode MSE; ``features`` optionally holds the expanded windows."""
    if features is None:
        pred = M.predict(params, windows.inputs)
    else:
        pred = M.forward(params, None, training=False, features=features)[0]
    return nd.mse_loss(pred, windows.targets)[0]


def train(
    model_config: M.ModelConfig,
    train_cfg: TrainConfig,
    train_windows: WindowSet,
    val_windows: WindowSet,
    normalizer: Normalizer | None = None,
):
    """Fit a fresh model; returns the parameters of the best validation epoch."""
    if len(train_windows) == 0 or len(val_windows) == 0:
        raise ValueError("training and validation window sets must be nonempty")
    params = M.init(model_config, normalizer)
    opt = nd.AdamState.for_params(params.weights)
    rng = np.random.default_rng(train_cfg.seed)
    features = expand(train_windows.inputs, model_config.feature).data
    val_features = expand(val_windows.inputs, model_config.feature).data
    history = TrainHistory()
    best, best_val, stale = params, np.inf, 0

    for epoch in range(train_cfg.max_epochs):
        t0 = time.perf_counter()
        total, count = 0.0, 0
        for idx in batches(len(train_windows), train_cfg.batch_size,
                           rng if train_cfg.shuffle else None):
            pred, cache = M.forward(params, None, training=True, features=features[idx])
            loss, grad = nd.mse_loss(pred, train_windows.targets[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
            grads = M.backward(params, cache, grad)
            params = M.updated_buffers(params, cache)
            weights, opt = nd.adam_step(params.weights, grads, opt, train_cfg.lr)
            params = params.with_weights(weights)
            total += loss * len(idx)
            count += len(idx)
        val = evaluate_mse(params, val_windows, val_features)
        if not np.isfinite(val):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        history.train_loss.append(total / count)
        history.val_loss.append(val)
        history.wall_time.append(time.perf_counter() - t0)
        log.debug("epoch %d train %.6g val %.6g", epoch, total / count, val)
        if val < best_val:
            best, best_val, stale = params, val, 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= train_cfg.patience:
                break
    return best, history


def multi_run(model_config, train_cfg, series, n_runs, seeds=None, **experiment_kwargs):
    """Repeat a train+evaluate experiment over seeds.

    Returns ``{metric: (mean, std)}`` plus the list of per-run reports under
    ``"runs"``. ``experiment_kwargs`` are forwarded to
    :func:`kanad.experiment.run_experiment`.
    """
    from dataclasses import replace

    from .experiment import run_experiment

    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = list(range(n_runs)) if seeds is None else list(seeds)[:n_runs]
    if len(seeds) < n_runs:
        raise ValueError("need one seed per run")
    reports = []
    for seed in seeds:
        result = run_experiment(
            series,
            replace(model_config, seed=seed),
            replace(train_cfg, seed=seed),
            **experiment_kwargs,
        )
        reports.append(result.report)
    keys = ("best_f1", "event_f1", "delay_f1", "auprc")
    summary = {}
    for key in keys:
        vals = np.array([getattr(r, key) for r in reports])
        summary[key] = (float(vals.mean()), float(vals.std()))
    summary["runs"] = reports
    return summary
