"""Conditional temporal 1D U-Net over action trajectories.

Trajectories (B, N, D) are treated as D-channel signals of length N.
Conditioning = sinusoidal embedding of the transport time concatenated with
the state vector, projected per residual block to a channel-wise
scale-and-shift applied after the first normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class UNetConfig:
    horizon: int = 32
    action_dim: int = 7
    state_dim: int = 17
    channels: tuple = (32, 64, 64)
    kernel: int = 5
    groups: int = 8
    time_embed_dim: int = 16
    dtype: str = "float32"

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        levels = len(self.channels)
        if self.horizon % (2 ** (levels - 1)):
            raise ValueError(
                f"horizon {self.horizon} not a multiple of {2 ** (levels - 1)} "
                f"required by {levels} levels"
            )

    @property
    def cond_dim(self) -> int:
        return self.time_embed_dim + self.state_dim

    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "action_dim": self.action_dim,
            "state_dim": self.state_dim,
            "channels": list(self.channels),
            "kernel": self.kernel,
            "groups": self.groups,
            "time_embed_dim": self.time_embed_dim,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        return cls(**{**d, "channels": tuple(d["channels"])})


def _n_groups(config: UNetConfig, channels: int) -> int:
    g = min(config.groups, channels)
    while channels % g:
        g -= 1
    return g


def _init_conv(rng, c_out, c_in, k, dtype):
    bound = 1.0 / np.sqrt(c_in * k)
    w = rng.uniform(-bound, bound, size=(c_out, c_in, k)).astype(dtype)
    b = rng.uniform(-bound, bound, size=(c_out,)).astype(dtype)
    return w, b


def _init_linear(rng, f_out, f_in, dtype):
    bound = 1.0 / np.sqrt(f_in)
    w = rng.uniform(-bound, bound, size=(f_out, f_in)).astype(dtype)
    b = rng.uniform(-bound, bound, size=(f_out,)).astype(dtype)
    return w, b


def _init_block(rng, params, prefix, c_in, c_out, config, dtype):
    k = config.kernel
    params[f"{prefix}.conv1.w"], params[f"{prefix}.conv1.b"] = _init_conv(rng, c_out, c_in, k, dtype)
    params[f"{prefix}.gn1.g"] = np.ones(c_out, dtype=dtype)
    params[f"{prefix}.gn1.b"] = np.zeros(c_out, dtype=dtype)
    # Small init keeps the film modulation near identity early in training.
    w, b = _init_linear(rng, 2 * c_out, config.cond_dim, dtype)
    params[f"{prefix}.film.w"] = (0.1 * w).astype(dtype)
    params[f"{prefix}.film.b"] = np.zeros(2 * c_out, dtype=dtype)
    params[f"{prefix}.conv2.w"], params[f"{prefix}.conv2.b"] = _init_conv(rng, c_out, c_out, k, dtype)
    params[f"{prefix}.gn2.g"] = np.ones(c_out, dtype=dtype)
    params[f"{prefix}.gn2.b"] = np.zeros(c_out, dtype=dtype)
    if c_in != c_out:
        params[f"{prefix}.skip.w"], params[f"{prefix}.skip.b"] = _init_conv(rng, c_out, c_in, 1, dtype)


def init_unet_params(config: UNetConfig, seed: int = 0) -> dict:
    """Create the named parameter dict. The output head is zero-initialized
    so an untrained model is the zero field."""
    rng = np.random.default_rng(seed)
    dtype = config.np_dtype()
    params: dict[str, np.ndarray] = {}
    chans = config.channels
    levels = len(chans)
    c_prev = config.action_dim
    for i, c in enumerate(chans):
        _init_block(rng, params, f"down{i}", c_prev, c, config, dtype)
        c_prev = c
    _init_block(rng, params, "mid", chans[-1], chans[-1], config, dtype)
    c_up = chans[-1]
    for i in reversed(range(levels - 1)):
        _init_block(rng, params, f"up{i}", c_up + chans[i], chans[i], config, dtype)
        c_up = chans[i]
    params["head.w"] = np.zeros((config.action_dim, chans[0], 1), dtype=dtype)
    params["head.b"] = np.zeros(config.action_dim, dtype=dtype)
    return params


def param_count(params: dict) -> int:
    return int(sum(v.size for v in params.values()))


def as_tensors(params: dict) -> dict:
    """Wrap raw arrays as trainable tensors (shared data, no copy)."""
    out = {}
    for k, v in params.items():
        t = Tensor(v, requires_grad=True)
        out[k] = t
    return out


def _res_block(p: dict, prefix: str, x: Tensor, cond: Tensor, config: UNetConfig) -> Tensor:
    c_out = p[f"{prefix}.conv1.w"].data.shape[0]
    g = _n_groups(config, c_out)
    h = ad.conv1d(x, p[f"{prefix}.conv1.w"], p[f"{prefix}.conv1.b"])
    film = ad.linear(cond, p[f"{prefix}.film.w"], p[f"{prefix}.film.b"])
    h = ad.group_norm_film(h, p[f"{prefix}.gn1.g"], p[f"{prefix}.gn1.b"], film, g)
    h = ad.silu(h)
    h = ad.conv1d(h, p[f"{prefix}.conv2.w"], p[f"{prefix}.conv2.b"])
    h = ad.group_norm(h, p[f"{prefix}.gn2.g"], p[f"{prefix}.gn2.b"], g)
    h = ad.silu(h)
    if f"{prefix}.skip.w" in p:
        res = ad.conv1d(x, p[f"{prefix}.skip.w"], p[f"{prefix}.skip.b"], pad=0)
    else:
        res = x
    return ad.add(h, res)


def unet_forward(params: dict, config: UNetConfig, traj, t, cond) -> Tensor:
    """Evaluate the flow network.

    params: dict of Tensors (see as_tensors). traj: (B, N, D) array or
    Tensor; t: scalar or (B,) transport times in [0, 1]; cond: (B, S) state
    vectors. Returns a (B, N, D) Tensor.
    """
    x = traj if isinstance(traj, Tensor) else Tensor(np.asarray(traj))
    if x.data.ndim != 3:
        raise ValueError(f"traj must be (B, N, D), got shape {x.data.shape}")
    batch, n, d = x.data.shape
    if n != config.horizon:
        raise ValueError(f"traj horizon {n} != configured horizon {config.horizon}")
    if d != config.action_dim:
        raise ValueError(f"traj action dim {d} != configured action dim {config.action_dim}")
    cond_arr = np.asarray(cond if not isinstance(cond, Tensor) else cond.data)
    if cond_arr.ndim == 1:
        cond_arr = cond_arr[None, :]
    if cond_arr.shape != (batch, config.state_dim):
        raise ValueError(
            f"cond shape {cond_arr.shape} != (batch {batch}, state_dim {config.state_dim})"
        )
    dtype = config.np_dtype()
    t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (batch,))
    temb = ad.sinusoidal_embedding(t_arr, config.time_embed_dim)
    cvec = Tensor(np.concatenate([temb, cond_arr], axis=1).astype(dtype))

    if x.data.dtype != dtype:
        x = Tensor(x.data.astype(dtype)) if not x.requires_grad else x
    h = x  # (B, N, D): trajectory steps are the length axis, dims the channels
    levels = len(config.channels)
    skips = []
    for i in range(levels):
        h = _res_block(params, f"down{i}", h, cvec, config)
        if i < levels - 1:
            skips.append(h)
            h = ad.avg_pool1d(h)
    h = _res_block(params, "mid", h, cvec, config)
    for i in reversed(range(levels - 1)):
        h = ad.upsample_nearest(h)
        h = ad.concat([h, skips[i]], axis=2)
        h = _res_block(params, f"up{i}", h, cvec, config)
    return ad.conv1d(h, params["head.w"], params["head.b"], pad=0)
