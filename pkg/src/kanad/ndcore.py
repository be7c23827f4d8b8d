"""Differentiable numpy kernels with explicit forward and backward passes.

Tensors are float64 arrays whose last two axes are ``(channels, time)``.
Any leading axes are treated as batch axes. Every function here is pure:
it never mutates its arguments, and state updates (batchnorm running
statistics, Adam moments) come back as new values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_INV_SQRT_2 = 1.0 / math.sqrt(2.0)


class ShapeError(ValueError):
    """Raised when tensor shapes are inconsistent with a kernel's contract."""


def _check_finite(x, name="input"):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")


def _channels(x):
    if x.ndim < 2:
        raise ShapeError(f"expected (..., channels, time) array, got shape {x.shape}")
    return x.shape[-2]


# --------------------------------------------------------------------------
# compiled inner loops; all operate on C-contiguous (batch, channels, time)
# --------------------------------------------------------------------------

@njit(cache=True)
def _dw3_fwd(x, k, bias, out):
    nb, nc, nt = x.shape
    for b in range(nb):
        for c in range(nc):
            k0, k1, k2, bc = k[c, 0], k[c, 1], k[c, 2], bias[c]
            for t in range(nt):
                acc = k1 * x[b, c, t] + bc
                if t > 0:
                    acc += k0 * x[b, c, t - 1]
                if t + 1 < nt:
                    acc += k2 * x[b, c, t + 1]
                out[b, c, t] = acc


@njit(cache=True)
def _dw3_bwd(x, k, g, gx, gk, gb):
    nb, nc, nt = x.shape
    for c in range(nc):
        k0, k1, k2 = k[c, 0], k[c, 1], k[c, 2]
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        sb = 0.0
        for b in range(nb):
            for t in range(nt):
                gt = g[b, c, t]
                sb += gt
                s1 += gt * x[b, c, t]
                acc = k1 * gt
                if t > 0:
                    s0 += gt * x[b, c, t - 1]
                    acc += k2 * g[b, c, t - 1]
                if t + 1 < nt:
                    s2 += gt * x[b, c, t + 1]
                    acc += k0 * g[b, c, t + 1]
                gx[b, c, t] = acc
        gk[c, 0] = s0
        gk[c, 1] = s1
        gk[c, 2] = s2
        gb[c] = sb


@njit(cache=True)
def _channel_moments(x, mean, var):
    nb, nc, nt = x.shape
    n = nb * nt
    for c in range(nc):
        s = 0.0
        for b in range(nb):
            for t in range(nt):
                s += x[b, c, t]
        m = s / n
        q = 0.0
        for b in range(nb):
            for t in range(nt):
                d = x[b, c, t] - m
                q += d * d
        mean[c] = m
        var[c] = q / n


@njit(cache=True)
def _bn_apply(x, mean, inv_std, gamma, beta, xhat, out):
    nb, nc, nt = x.shape
    for b in range(nb):
        for c in range(nc):
            m, s, gm, bt = mean[c], inv_std[c], gamma[c], beta[c]
            for t in range(nt):
                h = (x[b, c, t] - m) * s
                xhat[b, c, t] = h
                out[b, c, t] = gm * h + bt


@njit(cache=True)
def _bn_bwd(xhat, g, gamma, inv_std, training, gx, ggamma, gbeta):
    nb, nc, nt = xhat.shape
    n = nb * nt
    for c in range(nc):
        sg = 0.0
        sgx = 0.0
        for b in range(nb):
            for t in range(nt):
                sg += g[b, c, t]
                sgx += g[b, c, t] * xhat[b, c, t]
        ggamma[c] = sgx
        gbeta[c] = sg
        scale = gamma[c] * inv_std[c]
        if training:
            mg = sg / n
            mgx = sgx / n
            for b in range(nb):
                for t in range(nt):
                    gx[b, c, t] = scale * (g[b, c, t] - mg - xhat[b, c, t] * mgx)
        else:
            for b in range(nb):
                for t in range(nt):
                    gx[b, c, t] = scale * g[b, c, t]


@njit(cache=True)
def _gelu(x, out, dout):
    flat = x.ravel()
    o = out.ravel()
    d = dout.ravel()
    for i in range(flat.size):
        v = flat[i]
        cdf = 0.5 * math.erfc(-v * _INV_SQRT_2)
        o[i] = v * cdf
        d[i] = cdf + v * _INV_SQRT_2PI * math.exp(-0.5 * v * v)


def _as3d(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return x.reshape((-1,) + x.shape[-2:])


# --------------------------------------------------------------------------
# depthwise convolution, kernel size 3, zero padding
# --------------------------------------------------------------------------

def depthwise_conv3_fwd(x, kernels, biases):
    """Apply an independent 3-tap kernel to each channel; output keeps shape.

    ``out[c, t] = k[c,0]*x[c,t-1] + k[c,1]*x[c,t] + k[c,2]*x[c,t+1] + b[c]``
    with zeros outside ``[0, T)``.
    """
    x = np.asarray(x, dtype=np.float64)
    kernels = np.ascontiguousarray(kernels, dtype=np.float64)
    biases = np.ascontiguousarray(biases, dtype=np.float64)
    c = _channels(x)
    if kernels.shape != (c, 3):
        raise ShapeError(f"kernels must have shape ({c}, 3), got {kernels.shape}")
    if biases.shape != (c,):
        raise ShapeError(f"biases must have shape ({c},), got {biases.shape}")
    if x.shape[-1] < 1:
        raise ShapeError("input must have at least one time position")
    _check_finite(x)
    x3 = _as3d(x)
    out = np.empty_like(x3)
    _dw3_fwd(x3, kernels, biases, out)
    return out.reshape(x.shape)


def depthwise_conv3_bwd(x, kernels, grad_out):
    """Return ``(grad_input, grad_kernels, grad_biases)`` for :func:`depthwise_conv3_fwd`."""
    x = np.asarray(x, dtype=np.float64)
    kernels = np.ascontiguousarray(kernels, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    c = _channels(x)
    if kernels.shape != (c, 3):
        raise ShapeError(f"kernels must have shape ({c}, 3), got {kernels.shape}")
    if grad_out.shape != x.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != input shape {x.shape}")
    x3, g3 = _as3d(x), _as3d(grad_out)
    gx = np.empty_like(x3)
    gk = np.empty((c, 3))
    gb = np.empty(c)
    _dw3_bwd(x3, kernels, g3, gx, gk, gb)
    return gx.reshape(x.shape), gk, gb


# --------------------------------------------------------------------------
# pointwise (1-width) convolution collapsing channels to one
# --------------------------------------------------------------------------

def pointwise_conv_fwd(x, weights, bias):
    """Weighted channel sum: ``out[0, t] = sum_c w[c] * x[c, t] + bias``."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    c = _channels(x)
    if weights.shape != (c,):
        raise ShapeError(f"weights must have shape ({c},), got {weights.shape}")
    _check_finite(x)
    out = np.einsum("c,...ct->...t", weights, x) + float(np.asarray(bias).reshape(-1)[0])
    return out[..., None, :]


def pointwise_conv_bwd(x, weights, grad_out):
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    c = _channels(x)
    if weights.shape != (c,):
        raise ShapeError(f"weights must have shape ({c},), got {weights.shape}")
    if grad_out.shape != x.shape[:-2] + (1, x.shape[-1]):
        raise ShapeError(f"grad_out shape {grad_out.shape} incompatible with input {x.shape}")
    g = grad_out[..., 0, :]
    grad_x = weights[:, None] * g[..., None, :]
    grad_w = np.sum(g[..., None, :] * x, axis=tuple(range(x.ndim - 2)) + (-1,))
    grad_b = np.array([g.sum()])
    return grad_x, grad_w, grad_b


# --------------------------------------------------------------------------
# batch normalization over (batch, time) per channel
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BnState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0 < self.momentum < 1:
            raise ValueError("momentum must lie in (0, 1)")
        if np.any(np.asarray(self.running_var) < 0):
            raise ValueError("running_var must be nonnegative")

    @classmethod
    def fresh(cls, channels):
        return cls(
            gamma=np.ones(channels),
            beta=np.zeros(channels),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
        )


@dataclass(frozen=True)
class BnCache:
    xhat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    training: bool
    running_mean: np.ndarray  # updated statistics (equal to the old ones in inference)
    running_var: np.ndarray


def batchnorm_fwd(x, state: BnState, training: bool, replicas: int = 1):
    """Normalize each channel, then scale by gamma and shift by beta.

    In training mode the statistics are taken over every batch and time
    position of the channel, and the cache carries the updated running
    statistics. Inference mode uses the running statistics.

    ``replicas`` declares that ``x`` stands for that many identical copies
    along the batch axis. Mean and variance are unchanged by replication;
    only the unbiased correction of the running variance sees the larger
    population.
    """
    x = np.asarray(x, dtype=np.float64)
    c = _channels(x)
    if np.shape(state.gamma) != (c,):
        raise ShapeError(f"batchnorm state has {np.shape(state.gamma)[0]} channels, input has {c}")
    _check_finite(x)
    x3 = _as3d(x)
    if training:
        if replicas < 1:
            raise ValueError("replicas must be >= 1")
        population = replicas * x3.shape[0] * x3.shape[2]
        if population < 2:
            raise ValueError("batchnorm training needs at least 2 values per channel")
        mean, var = np.empty(c), np.empty(c)
        _channel_moments(x3, mean, var)
        m = state.momentum
        new_mean = (1 - m) * state.running_mean + m * mean
        new_var = (1 - m) * state.running_var + m * var * population / (population - 1)
    else:
        mean = np.asarray(state.running_mean, dtype=np.float64)
        var = np.asarray(state.running_var, dtype=np.float64)
        new_mean, new_var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + state.eps)
    gamma = np.ascontiguousarray(state.gamma, dtype=np.float64)
    beta = np.ascontiguousarray(state.beta, dtype=np.float64)
    xhat, out = np.empty_like(x3), np.empty_like(x3)
    _bn_apply(x3, np.ascontiguousarray(mean), inv_std, gamma, beta, xhat, out)
    cache = BnCache(xhat.reshape(x.shape), inv_std, gamma, training, new_mean, new_var)
    return out.reshape(x.shape), cache


def batchnorm_bwd(cache: BnCache, grad_out):
    """Return ``(grad_input, grad_gamma, grad_beta)``."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != cache.xhat.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != cached shape {cache.xhat.shape}")
    xhat3, g3 = _as3d(cache.xhat), _as3d(grad_out)
    c = xhat3.shape[1]
    gx = np.empty_like(g3)
    ggamma, gbeta = np.empty(c), np.empty(c)
    _bn_bwd(xhat3, g3, cache.gamma, cache.inv_std, cache.training, gx, ggamma, gbeta)
    return gx.reshape(grad_out.shape), ggamma, gbeta


# --------------------------------------------------------------------------
# GELU (exact, Gaussian CDF form)
# --------------------------------------------------------------------------

def gelu_with_grad(x):
    """``(GELU(x), dGELU/dx)`` in one pass."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    out, dout = np.empty_like(x), np.empty_like(x)
    _gelu(x, out, dout)
    return out, dout


def gelu_fwd(x):
    """``x * Phi(x)`` with ``Phi`` the standard normal CDF."""
    scalar = np.ndim(x) == 0
    out = gelu_with_grad(np.atleast_1d(x))[0]
    return float(out[0]) if scalar else out


def gelu_bwd(x):
    """Derivative of GELU: ``Phi(x) + x * phi(x)``."""
    scalar = np.ndim(x) == 0
    d = gelu_with_grad(np.atleast_1d(x))[1]
    return float(d[0]) if scalar else d


# --------------------------------------------------------------------------
# affine head and loss
# --------------------------------------------------------------------------

def affine_fwd(x, weights, bias):
    """``x @ weights + bias``; ``x`` may be a single vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 1 or x.shape[-1] != weights.shape[0]:
        raise ShapeError(f"weights length {weights.shape} does not match input {x.shape}")
    # a row-wise reduction (rather than a BLAS product) gives every row the
    # same summation order, so equal rows always produce equal outputs
    return np.sum(x * weights, axis=-1) + float(np.asarray(bias).reshape(-1)[0])


def affine_bwd(x, weights, grad_out):
    """Return ``(grad_x, grad_weights, grad_bias)``; ``grad_out`` matches the output shape."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if weights.ndim != 1 or x.shape[-1] != weights.shape[0]:
        raise ShapeError(f"weights length {weights.shape} does not match input {x.shape}")
    if grad_out.shape != x.shape[:-1]:
        raise ShapeError(f"grad_out shape {grad_out.shape} != output shape {x.shape[:-1]}")
    grad_x = grad_out[..., None] * weights
    grad_w = np.tensordot(grad_out, x, axes=grad_out.ndim) if grad_out.ndim else grad_out * x
    grad_b = np.array([np.sum(grad_out)])
    return grad_x, grad_w, grad_b


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    if pred.size == 0:
        raise ValueError("mse_loss of an empty vector is undefined")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kwargs):
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            **kwargs,
        )


def adam_step(params, grads, state: AdamState, lr):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if params.keys() != grads.keys():
        raise ShapeError("gradient set does not mirror the parameter set")
    m_prev = state.m or {k: np.zeros_like(p) for k, p in params.items()}
    v_prev = state.v or {k: np.zeros_like(p) for k, p in params.items()}
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    new_params, new_m, new_v = {}, {}, {}
    for key, p in params.items():
        g = np.asarray(grads[key], dtype=np.float64)
        if g.shape != np.shape(p) or m_prev[key].shape != g.shape:
            raise ShapeError(f"shape mismatch for {key!r}: param {np.shape(p)}, grad {g.shape}")
        m = b1 * m_prev[key] + (1 - b1) * g
        v = b2 * v_prev[key] + (1 - b2) * g * g
        new_params[key] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[key] = m
        new_v[key] = v
    return new_params, AdamState(step, new_m, new_v, b1, b2, state.eps)
