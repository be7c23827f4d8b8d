"""The forecaster: basis expansion, stacked depthwise CNN, residual,
down-convolution and a linear projection head.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import ndcore as nd
from .basis import BasisKind, FeatureConfig, expand
from .pipeline import Normalizer

FORMAT_VERSION = 1
_MAGIC = b"KANADMDL"


class ModelFileError(ValueError):
    pass


class CorruptModelError(ModelFileError):
    pass


class ConfigMismatchError(ModelFileError):
    pass


class StaleCacheError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    n_blocks: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")

    @property
    def channels(self):
        return self.feature.channels

    @property
    def window_len(self):
        return self.feature.window_len

    def architecture(self):
        """Config fields that determine tensor shapes (the seed does not)."""
        feat = asdict(self.feature)
        feat["basis"] = self.feature.basis.value
        return {"feature": feat, "n_blocks": self.n_blocks}

    def fingerprint(self):
        blob = json.dumps(
            {"format": FORMAT_VERSION, **self.architecture()}, sort_keys=True
        ).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, d):
        feat = dict(d["feature"])
        feat["basis"] = BasisKind(feat["basis"])
        return cls(FeatureConfig(**feat), int(d["n_blocks"]), int(d.get("seed", 0)))


def conv_layer_names(config: ModelConfig):
    return [f"block{b}.conv{j}" for b in range(config.n_blocks) for j in range(2)]


def param_shapes(config: ModelConfig):
    """Ordered trainable tensor shapes."""
    c, t = config.channels, config.window_len
    shapes = {}
    for name in conv_layer_names(config):
        shapes[f"{name}.weight"] = (c, 3)
        shapes[f"{name}.bias"] = (c,)
        shapes[f"{name}.gamma"] = (c,)
        shapes[f"{name}.beta"] = (c,)
    shapes["down.weight"] = (c,)
    shapes["down.bias"] = (1,)
    shapes["down.gamma"] = (1,)
    shapes["down.beta"] = (1,)
    shapes["proj.weight"] = (t,)
    shapes["proj.bias"] = (1,)
    return shapes


def buffer_shapes(config: ModelConfig):
    c = config.channels
    shapes = {}
    for name in conv_layer_names(config):
        shapes[f"{name}.running_mean"] = (c,)
        shapes[f"{name}.running_var"] = (c,)
    shapes["down.running_mean"] = (1,)
    shapes["down.running_var"] = (1,)
    return shapes


def param_count(config: ModelConfig) -> int:
    """Number of trainable scalars; running statistics are not counted."""
    return int(sum(np.prod(s) for s in param_shapes(config).values()))


@dataclass(frozen=True)
class ModelParams:
    config: ModelConfig
    weights: dict
    buffers: dict
    normalizer: Normalizer = field(default_factory=Normalizer)

    def with_weights(self, weights):
        return replace(self, weights=weights)

    def copy(self):
        return ModelParams(
            self.config,
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.buffers.items()},
            self.normalizer,
        )


def init(config: ModelConfig, normalizer: Normalizer | None = None) -> ModelParams:
    """Fan-in uniform weights from a seeded generator; BN gamma=1, beta=0."""
    rng = np.random.default_rng(config.seed)
    c, t = config.channels, config.window_len
    weights = {}
    for key, shape in param_shapes(config).items():
        if key.endswith(".gamma"):
            weights[key] = np.ones(shape)
        elif key.endswith(".beta"):
            weights[key] = np.zeros(shape)
        else:
            layer = key.split(".")[0] if key.startswith(("down", "proj")) else "conv"
            fan_in = {"conv": 3, "down": c, "proj": t}[layer]
            bound = 1.0 / np.sqrt(fan_in)
            weights[key] = rng.uniform(-bound, bound, size=shape)
    buffers = {
        key: (np.zeros(shape) if key.endswith("mean") else np.ones(shape))
        for key, shape in buffer_shapes(config).items()
    }
    return ModelParams(config, weights, buffers, normalizer or Normalizer())


def _bn_state(params: ModelParams, name, idx):
    w, b = params.weights, params.buffers
    return nd.BnState(
        w[f"{name}.gamma"][idx], w[f"{name}.beta"][idx],
        b[f"{name}.running_mean"][idx], b[f"{name}.running_var"][idx],
    )


@lru_cache(maxsize=None)
def channel_groups(feature: FeatureConfig):
    """Split channel indices into window-dependent rows and position rows.

    Position rows are the same for every window, and every layer before the
    down-convolution acts on channels independently, so their activations
    are shared across the batch and computed once.
    """
    names = feature.manifest()
    shared = tuple(i for i, n in enumerate(names) if "t/T" in n)
    varying = tuple(i for i in range(len(names)) if i not in shared)
    return np.array(varying, dtype=np.intp), np.array(shared, dtype=np.intp)


@dataclass
class GroupTrace:
    """Activations of one channel group through the reducing stage.

    ``shared`` groups hold a single batch row that stands for all windows.
    """
    idx: np.ndarray
    shared: bool
    h_in: list = field(default_factory=list)
    gelu_grad: list = field(default_factory=list)
    bn: list = field(default_factory=list)
    residual: np.ndarray = None


@dataclass
class ForwardCache:
    weights: dict
    config: ModelConfig
    batch: int
    h0: np.ndarray
    groups: list
    down_gelu_grad: np.ndarray
    down_bn: nd.BnCache
    x_prime: np.ndarray
    predictions: np.ndarray

    @property
    def residual(self):
        """The full ``(batch, C, T)`` residual sum ``H(L) + H(0)``."""
        out = np.empty_like(self.h0)
        for g in self.groups:
            out[:, g.idx] = g.residual
        return out


def forward(params: ModelParams, windows, training: bool, features=None):
    """Predict the next value for each window in a ``(batch, T)`` array.

    ``features`` may carry the already expanded ``(batch, C, T)`` basis
    matrix for ``windows``; the expansion has no parameters, so callers that
    revisit the same windows can compute it once.
    """
    cfg = params.config
    if features is None:
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim == 1:
            windows = windows[None, :]
        if windows.ndim != 2 or windows.shape[1] != cfg.window_len:
            raise nd.ShapeError(
                f"expected windows of shape (batch, {cfg.window_len}), got {windows.shape}"
            )
        h0 = expand(windows, cfg.feature).data
    else:
        h0 = np.asarray(features, dtype=np.float64)
        if h0.ndim != 3 or h0.shape[1:] != (cfg.channels, cfg.window_len):
            raise nd.ShapeError(f"features of shape {h0.shape} do not match the config")
    batch = h0.shape[0]
    w = params.weights
    groups = []
    for idx, shared in zip(channel_groups(cfg.feature), (False, True)):
        if len(idx) == 0:
            continue
        trace = GroupTrace(idx, shared)
        base = h0[:1, idx] if shared else h0[:, idx]
        h = base
        for name in conv_layer_names(cfg):
            z = nd.depthwise_conv3_fwd(h, w[f"{name}.weight"][idx], w[f"{name}.bias"][idx])
            bn_out, bn_cache = nd.batchnorm_fwd(
                z, _bn_state(params, name, idx), training, replicas=batch if shared else 1
            )
            act, act_grad = nd.gelu_with_grad(bn_out)
            trace.h_in.append(h)
            trace.gelu_grad.append(act_grad)
            trace.bn.append(bn_cache)
            h = act
        trace.residual = h + base
        groups.append(trace)
    d = 0.0
    for i, g in enumerate(groups):
        bias = w["down.bias"] if i == 0 else np.zeros(1)
        d = d + nd.pointwise_conv_fwd(g.residual, w["down.weight"][g.idx], bias)
    d = np.broadcast_to(d, (batch, 1, cfg.window_len))
    down_bn_out, down_bn = nd.batchnorm_fwd(d, _bn_state(params, "down", slice(None)), training)
    x_prime, down_grad = nd.gelu_with_grad(down_bn_out)
    x_prime = x_prime[:, 0, :]
    pred = nd.affine_fwd(x_prime, w["proj.weight"], w["proj.bias"])
    cache = ForwardCache(w, cfg, batch, h0, groups, down_grad, down_bn, x_prime, pred)
    return pred, cache


def updated_buffers(params: ModelParams, cache: ForwardCache) -> ModelParams:
    """Params with running statistics taken from a training-mode forward."""
    buffers = dict(params.buffers)
    for j, name in enumerate(conv_layer_names(params.config)):
        mean = buffers[f"{name}.running_mean"].copy()
        var = buffers[f"{name}.running_var"].copy()
        for g in cache.groups:
            mean[g.idx] = g.bn[j].running_mean
            var[g.idx] = g.bn[j].running_var
        buffers[f"{name}.running_mean"] = mean
        buffers[f"{name}.running_var"] = var
    buffers["down.running_mean"] = cache.down_bn.running_mean
    buffers["down.running_var"] = cache.down_bn.running_var
    return replace(params, buffers=buffers)


def backward(params: ModelParams, cache: ForwardCache, grad_predictions) -> dict:
    """Gradients of every trainable tensor given ``dLoss/dprediction``.

    The basis expansion is a fixed feature map, so no gradient reaches the
    raw window. Shared channel groups receive the batch-summed gradient,
    which is exact because every operation up to the down-convolution is
    linear in the upstream gradient and identical across the batch.
    """
    if cache.weights is not params.weights or cache.config != params.config:
        raise StaleCacheError("forward cache was produced with different parameters")
    g = np.asarray(grad_predictions, dtype=np.float64)
    if g.shape != cache.predictions.shape:
        raise nd.ShapeError(
            f"grad_predictions shape {g.shape} != predictions shape {cache.predictions.shape}"
        )
    w = params.weights
    grads = {key: np.zeros_like(val) for key, val in w.items()}
    g_xp, grads["proj.weight"], grads["proj.bias"] = nd.affine_bwd(
        cache.x_prime, w["proj.weight"], g
    )
    g_dn = g_xp[:, None, :] * cache.down_gelu_grad
    g_d, grads["down.gamma"], grads["down.beta"] = nd.batchnorm_bwd(cache.down_bn, g_dn)
    grads["down.bias"] = np.array([g_d.sum()])
    names = conv_layer_names(params.config)
    for grp in cache.groups:
        upstream = g_d.sum(axis=0, keepdims=True) if grp.shared else g_d
        g_h, grads["down.weight"][grp.idx], _ = nd.pointwise_conv_bwd(
            grp.residual, w["down.weight"][grp.idx], upstream
        )
        for j in reversed(range(len(names))):
            name = names[j]
            g_bn = g_h * grp.gelu_grad[j]
            g_z, grads[f"{name}.gamma"][grp.idx], grads[f"{name}.beta"][grp.idx] = (
                nd.batchnorm_bwd(grp.bn[j], g_bn)
            )
            g_h, grads[f"{name}.weight"][grp.idx], grads[f"{name}.bias"][grp.idx] = (
                nd.depthwise_conv3_bwd(grp.h_in[j], w[f"{name}.weight"][grp.idx], g_z)
            )
    return grads


def predict(params: ModelParams, windows, chunk=4096):
    """Inference-mode predictions, evaluated in fixed-size chunks."""
    windows = np.asarray(windows, dtype=np.float64)
    out = [forward(params, windows[i: i + chunk], training=False)[0]
           for i in range(0, len(windows), chunk)]
    return np.concatenate(out) if out else np.zeros(0)


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def _header(params: ModelParams):
    cfg = params.config
    return {
        "format": FORMAT_VERSION,
        "fingerprint": cfg.fingerprint(),
        "config": {**cfg.architecture(), "seed": cfg.seed},
        "normalizer": asdict(params.normalizer),
        "tensors": [[k, list(v.shape)] for k, v in params.weights.items()]
        + [[k, list(v.shape)] for k, v in params.buffers.items()],
        "n_weights": len(params.weights),
    }


def dumps(params: ModelParams) -> bytes:
    header = json.dumps(_header(params), sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
    buf.write(header)
    for arr in list(params.weights.values()) + list(params.buffers.values()):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def save(params: ModelParams, path):
    Path(path).write_bytes(dumps(params))


def loads(blob: bytes, expected: ModelConfig | None = None) -> ModelParams:
    if len(blob) < len(_MAGIC) + 12 + 32 or not blob.startswith(_MAGIC):
        raise CorruptModelError("not a kanad model file (bad magic or too short)")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptModelError("model file checksum mismatch (truncated or corrupted)")
    version, hlen = struct.unpack_from("<IQ", body, len(_MAGIC))
    if version != FORMAT_VERSION:
        raise CorruptModelError(f"unsupported model format version {version}")
    start = len(_MAGIC) + 12
    try:
        header = json.loads(body[start: start + hlen])
        config = ModelConfig.from_dict(header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptModelError(f"unreadable model header: {exc}") from exc
    if header["fingerprint"] != config.fingerprint():
        raise CorruptModelError("stored fingerprint does not match stored config")
    if expected is not None and expected.fingerprint() != config.fingerprint():
        raise ConfigMismatchError(
            f"model fingerprint {config.fingerprint()[:12]} does not match the "
            f"configured architecture {expected.fingerprint()[:12]}"
        )
    offset = start + hlen
    tensors = {}
    for name, shape in header["tensors"]:
        size = int(np.prod(shape))
        chunk = body[offset: offset + 8 * size]
        if len(chunk) != 8 * size:
            raise CorruptModelError("model file ends before all tensors were read")
        tensors[name] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        offset += 8 * size
    if offset != len(body):
        raise CorruptModelError("trailing bytes after tensor data")
    names = [n for n, _ in header["tensors"]]
    k = header["n_weights"]
    if names[:k] != list(param_shapes(config)) or names[k:] != list(buffer_shapes(config)):
        raise CorruptModelError("tensor manifest does not match the stored config")
    weights = {n: tensors[n] for n in names[:k]}
    buffers = {n: tensors[n] for n in names[k:]}
    return ModelParams(config, weights, buffers, Normalizer(**header["normalizer"]))


def load(path, expected: ModelConfig | None = None) -> ModelParams:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    return loads(blob, expected)
