import numpy as np
import pytest

from kanad import model as M
from kanad.basis import FeatureConfig
from kanad.experiment import split_windows
from kanad.pipeline import Series, SplitSpec, SynthSpec, inject_spikes, make_windows, synthesize
from kanad.trainer import TrainConfig, TrainHistory, batches, evaluate_mse, multi_run, train


def small_setup(seed=0, T=16, n=1200):
    t = np.arange(n)
    rng = np.random.default_rng(seed)
    ws = make_windows(Series(np.sin(2 * np.pi * t / 16) + 0.05 * rng.normal(size=n)), T)
    cut = int(0.8 * len(ws))
    idx = np.arange(len(ws))
    cfg = M.ModelConfig(FeatureConfig(n_terms=2, window_len=T), seed=seed)
    return cfg, ws.select(idx < cut), ws.select(idx >= cut)


def test_batches_cover_every_index_once():
    rng = np.random.default_rng(0)
    groups = batches(10, 4, rng)
    assert sorted(np.concatenate(groups).tolist()) == list(range(10))
    assert [len(g) for g in groups] == [4, 4, 2]


def test_trailing_singleton_is_merged():
    groups = batches(9, 4)
    assert [len(g) for g in groups] == [4, 5]
    assert batches(1, 4)[0].tolist() == [0]


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_single_epoch():
    cfg, tr, va = small_setup()
    _, hist = train(cfg, TrainConfig(max_epochs=1, batch_size=128), tr, va)
    assert hist.epochs == 1 and hist.best_epoch == 0


def test_empty_split_rejected():
    cfg, tr, va = small_setup()
    with pytest.raises(ValueError):
        train(cfg, TrainConfig(max_epochs=1), tr, va.select(np.zeros(len(va), bool)))


def test_training_is_deterministic():
    cfg, tr, va = small_setup(seed=1)
    tc = TrainConfig(max_epochs=4, batch_size=128, seed=1)
    a, ha = train(cfg, tc, tr, va)
    b, hb = train(cfg, tc, tr, va)
    assert ha.train_loss == hb.train_loss and ha.val_loss == hb.val_loss
    assert M.dumps(a) == M.dumps(b)


def test_returns_best_validation_epoch():
    cfg, tr, va = small_setup(seed=2)
    params, hist = train(cfg, TrainConfig(max_epochs=12, batch_size=64, patience=3, seed=2), tr, va)
    assert hist.epochs <= 12
    best = evaluate_mse(params, va)
    assert best == pytest.approx(min(hist.val_loss), rel=1e-12)
    assert all(best <= v + 1e-12 for v in hist.val_loss)
    assert hist.val_loss[hist.best_epoch] == min(hist.val_loss)


def test_early_stopping_respects_patience():
    cfg, tr, va = small_setup(seed=3)
    _, hist = train(cfg, TrainConfig(max_epochs=60, batch_size=256, patience=2, lr=0.05, seed=3), tr, va)
    if hist.epochs < 60:
        assert hist.epochs - 1 - hist.best_epoch == 2


def test_training_reduces_loss():
    cfg, tr, va = small_setup(seed=4)
    _, hist = train(cfg, TrainConfig(max_epochs=15, batch_size=128, seed=4), tr, va)
    assert min(hist.val_loss) < 0.5 * hist.val_loss[0]


def test_history_csv():
    hist = TrainHistory([1.0, 0.5], [1.5, 0.7], [0.1, 0.1], 1)
    lines = hist.to_csv().strip().split("\n")
    assert lines[0] == "epoch,train_loss,val_loss"
    assert lines[2] == "1,0.5,0.7"


@pytest.fixture(scope="module")
def tiny_series():
    return synthesize(SynthSpec(length=1500, base_period=24, anomaly_ratio=0.02, seed=5, anomaly_start=0.5))


def test_multi_run_single_run_has_zero_std(tiny_series):
    cfg = M.ModelConfig(FeatureConfig(n_terms=1, window_len=16))
    out = multi_run(cfg, TrainConfig(max_epochs=2, batch_size=256), tiny_series, 1)
    for key in ("best_f1", "event_f1", "delay_f1", "auprc"):
        assert out[key][1] == 0.0
    assert len(out["runs"]) == 1


def test_multi_run_repeated_seed_has_zero_std(tiny_series):
    cfg = M.ModelConfig(FeatureConfig(n_terms=1, window_len=16))
    out = multi_run(cfg, TrainConfig(max_epochs=2, batch_size=256), tiny_series, 2, seeds=[3, 3])
    assert out["event_f1"][1] == 0.0


def test_multi_run_distinct_seeds_reports_spread(tiny_series):
    cfg = M.ModelConfig(FeatureConfig(n_terms=1, window_len=16))
    out = multi_run(cfg, TrainConfig(max_epochs=2, batch_size=256), tiny_series, 2)
    mean, std = out["event_f1"]
    vals = [r.event_f1 for r in out["runs"]]
    assert mean == pytest.approx(np.mean(vals)) and std == pytest.approx(np.std(vals))


def test_multi_run_needs_seeds(tiny_series):
    with pytest.raises(ValueError):
        multi_run(M.ModelConfig(), TrainConfig(), tiny_series, 0)
    with pytest.raises(ValueError):
        multi_run(M.ModelConfig(), TrainConfig(), tiny_series, 3, seeds=[1])


def clean_test_mse(params, clean, boundary):
    """Original-unit MSE of one-step predictions whose targets lie past ``boundary``."""
    w = make_windows(params.normalizer.transform(clean), params.config.window_len)
    sel = w.origin_index + params.normalizer.offset >= boundary
    pred = M.predict(params, w.inputs[sel])
    return float(np.mean((pred - w.targets[sel]) ** 2)) * params.normalizer.scale**2


@pytest.mark.parametrize("seed", range(4))
def test_spiky_training_data_barely_moves_clean_fit(seed):
    # train on a sinusoid with 5% single-point spikes and on its clean twin;
    # both are scored on the same clean test span
    clean = synthesize(SynthSpec(length=6000, base_period=24, anomaly_ratio=0.0, seed=seed))
    boundary = SplitSpec().boundaries(len(clean))[1]
    values, labels = inject_spikes(
        clean.values, clean.labels, 0.05, 0.4, np.random.default_rng(seed), stop=boundary, max_len=1
    )
    cfg = M.ModelConfig(FeatureConfig(n_terms=2, window_len=48), seed=seed)
    tc = TrainConfig(seed=seed, batch_size=256, max_epochs=30)
    mse = []
    for series in (clean, Series(values, labels)):
        norm, (tr, va, _) = split_windows(series, SplitSpec(), 48, cte=True)
        params, _ = train(cfg, tc, tr, va, norm)
        mse.append(clean_test_mse(params, clean, boundary))
    assert mse[1] <= 1.5 * mse[0]
