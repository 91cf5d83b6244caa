"""Minimal dense tensor arithmetic with reverse-mode differentiation.

A dynamic tape: every op returns a `Tensor` holding its value, its parent
tensors, and a vector-Jacobian closure. `backward(loss)` walks the tape in
reverse topological order and accumulates gradients into `.grad`.

Data is row-major numpy; float32 by default, float64 where callers need
headroom (gradient checks). All ops are deterministic.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_grad_enabled = True


class no_grad:
    """Context manager disabling tape construction (inference paths)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        backward(self)


def _make(data, parents, vjp):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(loss: Tensor):
    """Accumulate gradients of a scalar loss into every reachable parameter."""
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None or node._vjp is None:
            if g is not None and node._vjp is None:
                node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if not parent.requires_grad or pg is None:
                continue
            if parent._vjp is None:
                parent.grad = pg if parent.grad is None else parent.grad + pg
            else:
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise and reduction ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,))


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def silu(a: Tensor) -> Tensor:
    sig = np.exp(np.negative(a.data))
    sig += 1.0
    np.reciprocal(sig, out=sig)
    out = a.data * sig
    return _make(out, (a,), lambda g: (g * (sig * (1.0 + a.data * (1.0 - sig))),))


def tsum(a: Tensor, axis=None) -> Tensor:
    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy(),)

    return _make(a.data.sum(axis=axis), (a,), vjp)


def tmean(a: Tensor, axis=None) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.data.shape[ax] for ax in axes]))

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / n, a.data.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis) / n, a.data.shape).copy(),)

    return _make(a.data.mean(axis=axis), (a,), vjp)


# ---------------------------------------------------------------------------
# Shape ops
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def concat(tensors, axis: int) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make(a.data[idx], (a,), vjp)


def expand_mid(a: Tensor) -> Tensor:
    """Insert a broadcast length axis: (B, C) -> (B, 1, C)."""
    b, c = a.data.shape
    return reshape(a, (b, 1, c))


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x (B, F_in), w (F_out, F_in), b (F_out,) -> (B, F_out)."""
    return _make(
        x.data @ w.data.T + b.data,
        (x, w, b),
        lambda g: (g @ w.data, g.T @ x.data, g.sum(axis=0)),
    )


# ---------------------------------------------------------------------------
# 1D convolution stack (channels-last: B, L, C)
# ---------------------------------------------------------------------------


def _pad_length(x: np.ndarray, pad: int) -> np.ndarray:
    if not pad:
        return x
    b, l, c = x.shape
    out = np.zeros((b, l + 2 * pad, c), dtype=x.dtype)
    out[:, pad : pad + l, :] = x
    return out


def _corr1d_cols(x: np.ndarray, kernel: int, pad: int):
    """im2col matrix (B, L_out, K*C) for stride-1 cross-correlation.

    Built by K shifted block copies; out-of-range shifts stay zero, which
    realizes the zero padding without materializing a padded signal.
    """
    b, l, c = x.shape
    l_out = l + 2 * pad - kernel + 1
    cols = np.zeros((b, l_out, kernel * c), dtype=x.dtype)
    for k in range(kernel):
        lo = max(0, pad - k)
        hi = min(l_out, l + pad - k)
        if hi > lo:
            cols[:, lo:hi, k * c : (k + 1) * c] = x[:, lo + k - pad : hi + k - pad, :]
    return cols


def conv1d(x: Tensor, w: Tensor, b: Tensor, pad: int | None = None) -> Tensor:
    """Stride-1 cross-correlation. x (B,L,Ci), w (Co,Ci,K), b (Co,).

    Default padding keeps the length (requires odd K).
    """
    c_out, c_in, kernel = w.data.shape
    if x.data.shape[2] != c_in:
        raise ValueError(
            f"conv1d channel mismatch: input has {x.data.shape[2]}, kernel expects {c_in}"
        )
    if pad is None:
        pad = (kernel - 1) // 2
    cols = _corr1d_cols(x.data, kernel, pad)  # (B, L_out, K*Ci)
    # Weight rows ordered to match the (K, Ci) window layout.
    w_mat = w.data.transpose(2, 1, 0).reshape(kernel * c_in, c_out)
    out = cols @ w_mat + b.data  # (B, L_out, Co)

    def vjp(g):
        batch, l_out, _ = g.shape
        g2 = g.reshape(batch * l_out, c_out)
        dw = (
            (g2.T @ cols.reshape(batch * l_out, kernel * c_in))
            .reshape(c_out, kernel, c_in)
            .transpose(0, 2, 1)
        )
        db = g.sum(axis=(0, 1))
        if x.requires_grad:
            # dx correlates g with the channel-swapped, index-flipped kernel.
            w_flip = w.data[:, :, ::-1].transpose(2, 0, 1).reshape(kernel * c_out, c_in)
            gcols = _corr1d_cols(g, kernel, kernel - 1 - pad)
            dx = gcols @ w_flip
        else:
            dx = None
        return dx, dw, db

    return _make(out, (x, w, b), vjp)


def avg_pool1d(x: Tensor) -> Tensor:
    """Halve the length by averaging adjacent pairs; length must be even."""
    b, l, c = x.data.shape
    if l % 2:
        raise ValueError(f"avg_pool1d needs even length, got {l}")
    out = x.data.reshape(b, l // 2, 2, c).mean(axis=2)
    return _make(out, (x,), lambda g: (np.repeat(g, 2, axis=1) * 0.5,))


def upsample_nearest(x: Tensor) -> Tensor:
    """Double the length by nearest-neighbor repetition."""
    b, l, c = x.data.shape
    out = np.repeat(x.data, 2, axis=1)
    return _make(out, (x,), lambda g: (g.reshape(b, l, 2, c).sum(axis=2),))


def _group_stats(x: np.ndarray, groups: int, eps: float):
    """Per-(batch, group) normalization of (B, L, C); returns (xhat, inv)."""
    b, l, c = x.shape
    cg = c // groups
    xg = x.reshape(b, l, groups, cg)
    mean = xg.mean(axis=(1, 3), keepdims=True)
    diff = xg - mean
    var = (diff * diff).mean(axis=(1, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    return (diff * inv).reshape(b, l, c), inv


def _group_norm_dx(g_hat: np.ndarray, xhat: np.ndarray, inv: np.ndarray,
                   groups: int) -> np.ndarray:
    b, l, c = g_hat.shape
    cg = c // groups
    dxh = g_hat.reshape(b, l, groups, cg)
    xh = xhat.reshape(b, l, groups, cg)
    return (
        inv
        * (
            dxh
            - dxh.mean(axis=(1, 3), keepdims=True)
            - xh * (dxh * xh).mean(axis=(1, 3), keepdims=True)
        )
    ).reshape(b, l, c)


def group_norm(x: Tensor, gamma: Tensor, beta: Tensor, groups: int, eps: float = 1e-5) -> Tensor:
    """Normalize (B, L, C) over channel groups, then per-channel affine."""
    b, l, c = x.data.shape
    if c % groups:
        raise ValueError(f"channels {c} not divisible by {groups} groups")
    xhat, inv = _group_stats(x.data, groups, eps)
    out = xhat * gamma.data + beta.data

    def vjp(g):
        dgamma = (g * xhat).sum(axis=(0, 1))
        dbeta = g.sum(axis=(0, 1))
        dx = _group_norm_dx(g * gamma.data, xhat, inv, groups)
        return dx, dgamma, dbeta

    return _make(out, (x, gamma, beta), vjp)


def group_norm_film(x: Tensor, gamma: Tensor, beta: Tensor, film: Tensor,
                    groups: int, eps: float = 1e-5) -> Tensor:
    """Group normalization fused with feature-wise modulation.

    film (B, 2C) holds per-sample (scale, shift); the output is
    (xhat * gamma + beta) * (1 + scale) + shift, evaluated with one fused
    affine to keep tape size and temporaries down.
    """
    b, l, c = x.data.shape
    if c % groups:
        raise ValueError(f"channels {c} not divisible by {groups} groups")
    if film.data.shape != (b, 2 * c):
        raise ValueError(f"film shape {film.data.shape} != ({b}, {2 * c})")
    xhat, inv = _group_stats(x.data, groups, eps)
    sc1 = 1.0 + film.data[:, :c]
    sh = film.data[:, c:]
    eff_gamma = gamma.data * sc1  # (B, C)
    eff_beta = beta.data * sc1 + sh
    out = xhat * eff_gamma[:, None, :] + eff_beta[:, None, :]

    def vjp(g):
        d_eg = (g * xhat).sum(axis=1)  # (B, C)
        d_eb = g.sum(axis=1)
        dgamma = (d_eg * sc1).sum(axis=0)
        dbeta = (d_eb * sc1).sum(axis=0)
        d_sc = d_eg * gamma.data + d_eb * beta.data
        dfilm = np.concatenate([d_sc, d_eb], axis=1)
        dx = _group_norm_dx(g * eff_gamma[:, None, :], xhat, inv, groups)
        return dx, dgamma, dbeta, dfilm

    return _make(out, (x, gamma, beta, film), vjp)


def sinusoidal_embedding(t: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Embed scalars (B,) into (B, dim) features: one raw channel plus a
    sin/cos ladder.

    Inputs in [0, 1] are scaled by 100 so the standard integer-step
    frequency ladder resolves them; the raw channel (2t - 1) disambiguates
    times closer than the ladder's shortest period.
    """
    tt = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    half = (dim - 1) // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / max(half - 1, 1))
    args = tt * 100.0 * freqs
    parts = [2.0 * tt - 1.0, np.sin(args), np.cos(args)]
    if dim - 1 - 2 * half:
        parts.append(np.zeros((len(tt), 1)))
    return np.concatenate(parts, axis=1)
