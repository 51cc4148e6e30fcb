"""Forward/backward kernels for every op kind the graph engine supports.

Each kernel pair has the signature::

    fwd(vals, attrs) -> (out, cache)
    bwd(gout, vals, out, cache, attrs) -> tuple of input gradients

``bwd`` returns ``None`` in a slot whose input never carries a gradient
(integer index inputs, stop-gradient sources).
"""
from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    pass


def _require(cond, msg):
    if not cond:
        raise ShapeError(msg)


# --- affine -----------------------------------------------------------------

def affine_fwd(vals, attrs):
    x, W, b = vals
    _require(W.ndim == 2, f"weight must be 2-D, got {W.shape}")
    _require(x.shape[-1] == W.shape[0],
             f"input width {x.shape[-1]} != weight rows {W.shape[0]}")
    _require(b.shape == (W.shape[1],), f"bias shape {b.shape} != ({W.shape[1]},)")
    return x @ W + b, None


def affine_bwd(g, vals, out, cache, attrs):
    x, W, _ = vals
    x2 = x.reshape(-1, x.shape[-1])
    g2 = g.reshape(-1, g.shape[-1])
    return g @ W.T, x2.T @ g2, g2.sum(axis=0)


# --- 1-D convolution ----------------------------------------------------------

def _conv_pad(length, k, stride, padding):
    if padding == "valid":
        return 0, 0, (length - k) // stride + 1
    out = -(-length // stride)
    total = max((out - 1) * stride + k - length, 0)
    return total // 2, total - total // 2, out


def conv1d_fwd(vals, attrs):
    x, W, b = vals
    stride, padding = attrs["stride"], attrs["padding"]
    _require(x.ndim == 3, f"conv1d input must be (B, C, L), got {x.shape}")
    _require(W.ndim == 3 and W.shape[1] == x.shape[1],
             f"conv1d weight {W.shape} incompatible with input channels {x.shape[1]}")
    _require(b.shape == (W.shape[0],), f"conv1d bias {b.shape} != ({W.shape[0]},)")
    B, C, L = x.shape
    cout, _, k = W.shape
    left, right, lout = _conv_pad(L, k, stride, padding)
    _require(lout >= 1, f"conv1d output length {lout} < 1 for input length {L}")
    xp = np.pad(x, ((0, 0), (0, 0), (left, right))) if left or right else x
    idx = np.arange(lout)[:, None] * stride + np.arange(k)[None, :]
    cols = xp[:, :, idx].transpose(0, 2, 1, 3).reshape(B * lout, C * k)
    y = cols @ W.reshape(cout, C * k).T + b
    out = y.reshape(B, lout, cout).transpose(0, 2, 1)
    return out, (cols, xp.shape, left, lout)


def conv1d_bwd(g, vals, out, cache, attrs):
    x, W, _ = vals
    cols, xp_shape, left, lout = cache
    stride = attrs["stride"]
    B, C, L = x.shape
    cout, _, k = W.shape
    gy = g.transpose(0, 2, 1).reshape(B * lout, cout)
    gW = (gy.T @ cols).reshape(W.shape)
    gb = gy.sum(axis=0)
    gcols = (gy @ W.reshape(cout, C * k)).reshape(B, lout, C, k)
    gxp = np.zeros(xp_shape)
    pos = np.arange(lout) * stride
    for j in range(k):
        gxp[:, :, pos + j] += gcols[:, :, :, j].transpose(0, 2, 1)
    return gxp[:, :, left:left + L], gW, gb


def conv_transpose1d_fwd(vals, attrs):
    x, W, b = vals
    stride, pad = attrs["stride"], attrs["pad"]
    _require(x.ndim == 3, f"conv_transpose1d input must be (B, C, L), got {x.shape}")
    _require(W.ndim == 3 and W.shape[0] == x.shape[1],
             f"conv_transpose1d weight {W.shape} incompatible with input channels {x.shape[1]}")
    _require(b.shape == (W.shape[1],), f"conv_transpose1d bias {b.shape} != ({W.shape[1]},)")
    B, cin, L = x.shape
    _, cout, k = W.shape
    full = (L - 1) * stride + k
    _require(full - 2 * pad >= 1, "conv_transpose1d output is empty")
    xt = x.transpose(0, 2, 1).reshape(B * L, cin)
    contrib = (xt @ W.reshape(cin, cout * k)).reshape(B, L, cout, k)
    y = np.zeros((B, cout, full))
    pos = np.arange(L) * stride
    for j in range(k):
        y[:, :, pos + j] += contrib[:, :, :, j].transpose(0, 2, 1)
    out = y[:, :, pad:full - pad] + b[None, :, None]
    return out, (xt, full)


def conv_transpose1d_bwd(g, vals, out, cache, attrs):
    x, W, _ = vals
    xt, full = cache
    stride, pad = attrs["stride"], attrs["pad"]
    B, cin, L = x.shape
    _, cout, k = W.shape
    gfull = np.zeros((B, cout, full))
    gfull[:, :, pad:full - pad] = g
    idx = np.arange(L)[:, None] * stride + np.arange(k)[None, :]
    gc = gfull[:, :, idx].transpose(0, 2, 1, 3).reshape(B * L, cout * k)
    gx = (gc @ W.reshape(cin, cout * k).T).reshape(B, L, cin).transpose(0, 2, 1)
    gW = (xt.T @ gc).reshape(W.shape)
    return gx, gW, g.sum(axis=(0, 2))


# --- elementwise --------------------------------------------------------------

def _same(a, b, op):
    _require(a.shape == b.shape, f"{op}: operand shapes {a.shape} and {b.shape} differ")


def add_fwd(vals, attrs):
    _same(*vals, "add")
    return vals[0] + vals[1], None


def add_bwd(g, vals, out, cache, attrs):
    return g, g


def sub_fwd(vals, attrs):
    _same(*vals, "sub")
    return vals[0] - vals[1], None


def sub_bwd(g, vals, out, cache, attrs):
    return g, -g


def mul_fwd(vals, attrs):
    _same(*vals, "mul")
    return vals[0] * vals[1], None


def mul_bwd(g, vals, out, cache, attrs):
    return g * vals[1], g * vals[0]


def scale_fwd(vals, attrs):
    return vals[0] * attrs["c"], None


def scale_bwd(g, vals, out, cache, attrs):
    return (g * attrs["c"],)


def relu_fwd(vals, attrs):
    return np.maximum(vals[0], 0.0), None


def relu_bwd(g, vals, out, cache, attrs):
    return (g * (vals[0] > 0),)


def mish_fwd(vals, attrs):
    x = vals[0]
    sp = np.logaddexp(0.0, x)
    t = np.tanh(sp)
    return x * t, t


def mish_bwd(g, vals, out, t, attrs):
    x = vals[0]
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return (g * (t + x * (1.0 - t * t) * sig),)


# --- group normalization ------------------------------------------------------

def group_norm_fwd(vals, attrs):
    x, gamma, beta = vals
    groups, eps = attrs["groups"], attrs["eps"]
    _require(x.ndim == 3, f"group_norm input must be (B, C, L), got {x.shape}")
    B, C, L = x.shape
    _require(C % groups == 0, f"group_norm: {C} channels not divisible by {groups} groups")
    _require(gamma.shape == (C,) and beta.shape == (C,),
             f"group_norm affine shapes {gamma.shape}/{beta.shape} != ({C},)")
    xg = x.reshape(B, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(B, C, L)
    return xhat * gamma[None, :, None] + beta[None, :, None], (xhat, inv)


def group_norm_bwd(g, vals, out, cache, attrs):
    x, gamma, _ = vals
    xhat, inv = cache
    groups = attrs["groups"]
    B, C, L = x.shape
    ggamma = (g * xhat).sum(axis=(0, 2))
    gbeta = g.sum(axis=(0, 2))
    gxhat = (g * gamma[None, :, None]).reshape(B, groups, -1)
    xh = xhat.reshape(B, groups, -1)
    m = xh.shape[2]
    gx = inv / m * (m * gxhat - gxhat.sum(axis=2, keepdims=True)
                    - xh * (gxhat * xh).sum(axis=2, keepdims=True))
    return gx.reshape(B, C, L), ggamma, gbeta


# --- structural ---------------------------------------------------------------

def concat_fwd(vals, attrs):
    axis = attrs["axis"]
    ref = vals[0]
    for v in vals[1:]:
        _require(v.ndim == ref.ndim and all(
            a == b for i, (a, b) in enumerate(zip(v.shape, ref.shape)) if i != axis % ref.ndim),
            f"concat: shapes {[u.shape for u in vals]} disagree off axis {axis}")
    return np.concatenate(vals, axis=axis), None


def concat_bwd(g, vals, out, cache, attrs):
    axis = attrs["axis"]
    edges = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return tuple(np.split(g, edges, axis=axis))


def slice_fwd(vals, attrs):
    x = vals[0]
    axis, start, stop = attrs["axis"], attrs["start"], attrs["stop"]
    _require(0 <= start < stop <= x.shape[axis],
             f"slice [{start}:{stop}] out of range for axis {axis} of size {x.shape[axis]}")
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, stop)
    return x[tuple(sl)], tuple(sl)


def slice_bwd(g, vals, out, sl, attrs):
    gx = np.zeros_like(vals[0])
    gx[sl] = g
    return (gx,)


def reshape_fwd(vals, attrs):
    x = vals[0]
    shape = (x.shape[0],) + tuple(attrs["shape"])
    try:
        return x.reshape(shape), None
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.shape} to (batch, *{attrs['shape']})") from exc


def reshape_bwd(g, vals, out, cache, attrs):
    return (g.reshape(vals[0].shape),)


def transpose_fwd(vals, attrs):
    axes = attrs["axes"]
    _require(len(axes) == vals[0].ndim, f"transpose axes {axes} vs rank {vals[0].ndim}")
    return vals[0].transpose(axes), None


def transpose_bwd(g, vals, out, cache, attrs):
    return (g.transpose(np.argsort(attrs["axes"])),)


def stop_gradient_fwd(vals, attrs):
    return vals[0], None


def stop_gradient_bwd(g, vals, out, cache, attrs):
    return (None,)


# --- set pooling --------------------------------------------------------------

def max_pool_set_fwd(vals, attrs):
    x = vals[0]
    _require(x.ndim == 3, f"max_pool_set input must be (B, N, C), got {x.shape}")
    _require(x.shape[1] >= 1, "max_pool_set over an empty set")
    idx = x.argmax(axis=1)
    return np.take_along_axis(x, idx[:, None, :], axis=1)[:, 0, :], idx


def max_pool_set_bwd(g, vals, out, idx, attrs):
    gx = np.zeros_like(vals[0])
    np.put_along_axis(gx, idx[:, None, :], g[:, None, :], axis=1)
    return (gx,)


# --- reductions ---------------------------------------------------------------

def mse_fwd(vals, attrs):
    a, b = vals[0], vals[1]
    _same(a, b, "mse")
    d = a - b
    if len(vals) == 3:
        w = vals[2]
        _require(w.shape == (a.shape[0],), f"mse mask {w.shape} != ({a.shape[0]},)")
        per = (d * d).reshape(a.shape[0], -1).mean(axis=1)
        denom = w.sum()
        return np.array((w * per).sum() / denom if denom > 0 else 0.0), (d, denom)
    return np.array((d * d).mean()), (d, None)


def mse_bwd(g, vals, out, cache, attrs):
    d, denom = cache
    if denom is None:
        ga = (2.0 / d.size) * g * d
        return ga, -ga, None
    if denom == 0:
        z = np.zeros_like(d)
        return z, z, None
    w = vals[2].reshape((-1,) + (1,) * (d.ndim - 1))
    per_item = d[0].size
    ga = (2.0 / (denom * per_item)) * g * w * d
    return ga, -ga, None


def sum_fwd(vals, attrs):
    return np.array(vals[0].sum()), None


def sum_bwd(g, vals, out, cache, attrs):
    return (np.full_like(vals[0], g),)


# --- conditioning primitives --------------------------------------------------

def sinusoid_table(max_index: int, dim: int) -> np.ndarray:
    """Rows ``k = 0..max_index`` of the geometric-frequency sinusoid table."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    arg = np.arange(max_index + 1)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


def sinusoid_fwd(vals, attrs):
    k = np.asarray(vals[0])
    table = attrs["table"]
    _require(k.ndim == 1, f"timestep input must be 1-D, got {k.shape}")
    ki = k.astype(np.int64)
    _require(np.all(ki == k) and ki.min() >= 0 and ki.max() < len(table),
             f"timestep outside [0, {len(table) - 1}]")
    return table[ki], None


def sinusoid_bwd(g, vals, out, cache, attrs):
    return (None,)


def film_fwd(vals, attrs):
    h, scale, shift = vals
    _require(h.ndim == 3, f"film target must be (B, C, L), got {h.shape}")
    _require(scale.shape == h.shape[:2] and shift.shape == h.shape[:2],
             f"film scale/shift {scale.shape}/{shift.shape} != {h.shape[:2]}")
    return (1.0 + scale[:, :, None]) * h + shift[:, :, None], None


def film_bwd(g, vals, out, cache, attrs):
    h, scale, _ = vals
    return (g * (1.0 + scale[:, :, None]), (g * h).sum(axis=2), g.sum(axis=2))


KERNELS = {
    "affine": (affine_fwd, affine_bwd),
    "conv1d": (conv1d_fwd, conv1d_bwd),
    "conv_transpose1d": (conv_transpose1d_fwd, conv_transpose1d_bwd),
    "add": (add_fwd, add_bwd),
    "sub": (sub_fwd, sub_bwd),
    "mul": (mul_fwd, mul_bwd),
    "scale": (scale_fwd, scale_bwd),
    "relu": (relu_fwd, relu_bwd),
    "mish": (mish_fwd, mish_bwd),
    "group_norm": (group_norm_fwd, group_norm_bwd),
    "concat": (concat_fwd, concat_bwd),
    "slice": (slice_fwd, slice_bwd),
    "reshape": (reshape_fwd, reshape_bwd),
    "transpose": (transpose_fwd, transpose_bwd),
    "stop_gradient": (stop_gradient_fwd, stop_gradient_bwd),
    "max_pool_set": (max_pool_set_fwd, max_pool_set_bwd),
    "mse": (mse_fwd, mse_bwd),
    "sum": (sum_fwd, sum_bwd),
    "sinusoid": (sinusoid_fwd, sinusoid_bwd),
    "film": (film_fwd, film_bwd),
}
