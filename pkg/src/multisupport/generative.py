"""Trajectory generation: Flow Matching, DDPM, DDIM, and supervised
regression over one shared U-Net backbone.

All methods train and sample in normalized action space. The flow is
learned over linear interpolants between a standard-normal source and the
data, and sampled by fixed-step explicit Euler integration of the learned
velocity field. The diffusion model is epsilon-prediction over a
squared-cosine noise schedule; DDIM shares its weights and integrates the
deterministic reverse process on a sub-schedule. The supervised baseline
regresses the trajectory directly with the transport inputs pinned to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import NormStats
from .optim import Adam
from .unet import UNetConfig, as_tensors, init_unet_params, unet_forward

METHODS = ("flow", "ddpm", "bc")

# Sleep between network evaluations during sampling (seconds). Zero by
# default; live services set it so a worker-thread inference cedes the
# interpreter to the control loop on small machines.
COOPERATIVE_YIELD_S = 0.0


def _maybe_yield():
    if COOPERATIVE_YIELD_S > 0.0:
        import time

        time.sleep(COOPERATIVE_YIELD_S)


class TrainingDivergedError(RuntimeError):
    pass


class NonFiniteSampleError(RuntimeError):
    pass


@dataclass
class NoiseSchedule:
    """Cumulative signal fractions alpha_bar[0..steps], alpha_bar[0] = 1."""

    alpha_bar: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.alpha_bar) - 1

    def __post_init__(self):
        self.alpha_bar = np.asarray(self.alpha_bar, dtype=np.float64)

    def to_list(self) -> list:
        return self.alpha_bar.tolist()


def make_noise_schedule(steps: int = 100, s: float = 0.008) -> NoiseSchedule:
    """Squared-cosine schedule with per-step beta clipped to 0.999."""
    if steps < 2:
        raise ValueError("need at least 2 diffusion steps")
    k = np.arange(steps + 1, dtype=np.float64)
    f = np.cos((k / steps + s) / (1.0 + s) * (math.pi / 2)) ** 2
    alpha_bar = f / f[0]
    betas = np.clip(1.0 - alpha_bar[1:] / alpha_bar[:-1], 0.0, 0.999)
    return NoiseSchedule(np.concatenate([[1.0], np.cumprod(1.0 - betas)]))


@dataclass
class FlowModel:
    """A trained (or training) trajectory generator.

    method: 'flow' | 'ddpm' | 'bc'. DDIM sampling reuses a 'ddpm' model.
    """

    config: UNetConfig
    params: dict  # name -> Tensor
    method: str = "flow"
    schedule: NoiseSchedule | None = None
    norm: NormStats | None = None

    @classmethod
    def create(cls, config: UNetConfig, method: str = "flow", seed: int = 0,
               norm: NormStats | None = None) -> "FlowModel":
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        schedule = make_noise_schedule() if method == "ddpm" else None
        return cls(
            config=config,
            params=as_tensors(init_unet_params(config, seed=seed)),
            method=method,
            schedule=schedule,
            norm=norm,
        )

    def forward(self, traj, t, cond) -> np.ndarray:
        with ad.no_grad():
            return unet_forward(self.params, self.config, traj, t, cond).data

    def save(self, path):
        extras = {}
        if self.schedule is not None:
            extras["alpha_bar"] = self.schedule.to_list()
        if self.norm is not None:
            extras["norm"] = self.norm.to_dict()
        save_checkpoint(path, self.params, self.config, method=self.method, extras=extras)

    @classmethod
    def load(cls, path) -> "FlowModel":
        raw, config, method, extras = load_checkpoint(path)
        return cls(
            config=config,
            params=as_tensors(raw),
            method=method,
            schedule=NoiseSchedule(np.asarray(extras["alpha_bar"]))
            if "alpha_bar" in extras
            else None,
            norm=NormStats.from_dict(extras["norm"]) if extras.get("norm") else None,
        )


def _traj_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean over the batch of per-sample squared norms."""
    err = ad.sub(pred, Tensor(target))
    return ad.tmean(ad.tsum(ad.square(err), axis=(1, 2)))


def _check_batch(states: np.ndarray, actions: np.ndarray):
    if not (np.all(np.isfinite(states)) and np.all(np.isfinite(actions))):
        raise TrainingDivergedError("non-finite values in training batch")
    peak = float(np.abs(actions).max()) if actions.size else 0.0
    if peak > 1.2:
        raise TrainingDivergedError(
            f"normalized actions reach {peak:.3f}, outside [-1.2, 1.2]; "
            "normalization stats do not match this data"
        )


def flow_train_step(model: FlowModel, states, actions, opt: Adam,
                    rng: np.random.Generator) -> float:
    """One optimizer step of conditional flow matching; returns pre-step loss."""
    b = len(states)
    dtype = model.config.np_dtype()
    a_dst = actions.astype(dtype)
    a_src = rng.standard_normal(a_dst.shape).astype(dtype)
    # Stratified uniform: same marginal as U[0,1] draws but every batch
    # covers the endpoints, which otherwise train noticeably slower.
    t = (rng.permutation(b) + rng.uniform(0.0, 1.0, b)) / b
    z = (1.0 - t)[:, None, None].astype(dtype) * a_src + t[:, None, None].astype(dtype) * a_dst
    target = a_dst - a_src
    pred = unet_forward(model.params, model.config, z, t, states.astype(dtype))
    loss = _traj_loss(pred, target)
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingDivergedError(f"flow loss became {value}")
    opt.zero_grad()
    ad.backward(loss)
    opt.step()
    return value


def ddpm_train_step(model: FlowModel, states, actions, opt: Adam,
                    rng: np.random.Generator) -> float:
    """One epsilon-prediction step over the model's noise schedule."""
    schedule = model.schedule
    b = len(states)
    dtype = model.config.np_dtype()
    a_dst = actions.astype(dtype)
    k = rng.integers(1, schedule.steps + 1, size=b)
    ab = schedule.alpha_bar[k][:, None, None].astype(dtype)
    eps = rng.standard_normal(a_dst.shape).astype(dtype)
    x_k = np.sqrt(ab) * a_dst + np.sqrt(1.0 - ab) * eps
    pred = unet_forward(model.params, model.config, x_k, k / schedule.steps,
                        states.astype(dtype))
    loss = _traj_loss(pred, eps)
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingDivergedError(f"ddpm loss became {value}")
    opt.zero_grad()
    ad.backward(loss)
    opt.step()
    return value


def bc_train_step(model: FlowModel, states, actions, opt: Adam) -> float:
    """Supervised regression with transport inputs pinned to zero."""
    b = len(states)
    dtype = model.config.np_dtype()
    zeros = np.zeros((b, model.config.horizon, model.config.action_dim), dtype=dtype)
    pred = unet_forward(model.params, model.config, zeros, 0.0, states.astype(dtype))
    loss = _traj_loss(pred, actions.astype(dtype))
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingDivergedError(f"bc loss became {value}")
    opt.zero_grad()
    ad.backward(loss)
    opt.step()
    return value


# ---------------------------------------------------------------------------
# Sampling (normalized space)
# ---------------------------------------------------------------------------


def euler_integrate(field, z0: np.ndarray, steps: int) -> np.ndarray:
    """Explicit Euler from t=0 to t=1: z += (1/steps) * field(z, t)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    z = np.array(z0, dtype=np.float64, copy=True)
    dt = 1.0 / steps
    for i in range(steps):
        z = z + dt * np.asarray(field(z, i * dt))
        _maybe_yield()
    return z


def flow_sample(model: FlowModel, state: np.ndarray, steps: int = 20,
                rng: np.random.Generator | None = None,
                z0: np.ndarray | None = None) -> np.ndarray:
    """Draw one normalized trajectory by integrating the learned flow."""
    cfg = model.config
    if z0 is None:
        z0 = rng.standard_normal((cfg.horizon, cfg.action_dim))
    cond = np.asarray(state)[None, :]

    def field(z, t):
        return model.forward(z[None].astype(cfg.np_dtype()), t, cond)[0]

    out = euler_integrate(field, z0, steps)
    if not np.all(np.isfinite(out)):
        raise NonFiniteSampleError("flow sample diverged")
    return out


def ddpm_sample(model: FlowModel, state: np.ndarray,
                rng: np.random.Generator,
                eps_fn=None) -> np.ndarray:
    """Ancestral sampling over the full schedule; fresh noise except last step."""
    cfg = model.config
    schedule = model.schedule
    ab = schedule.alpha_bar
    cond = np.asarray(state)[None, :]
    if eps_fn is None:
        def eps_fn(x, k):
            return model.forward(x[None].astype(cfg.np_dtype()), k / schedule.steps, cond)[0]
    x = rng.standard_normal((cfg.horizon, cfg.action_dim))
    for k in range(schedule.steps, 0, -1):
        eps_hat = np.asarray(eps_fn(x, k))
        _maybe_yield()
        alpha_k = ab[k] / ab[k - 1]
        beta_k = 1.0 - alpha_k
        mean = (x - beta_k / math.sqrt(1.0 - ab[k]) * eps_hat) / math.sqrt(alpha_k)
        if k > 1:
            var = (1.0 - ab[k - 1]) / (1.0 - ab[k]) * beta_k
            x = mean + math.sqrt(var) * rng.standard_normal(x.shape)
        else:
            x = mean
    if not np.all(np.isfinite(x)):
        raise NonFiniteSampleError("ddpm sample diverged")
    return x


def ddim_sample(model: FlowModel, state: np.ndarray, steps: int = 20,
                rng: np.random.Generator | None = None,
                x_init: np.ndarray | None = None,
                eps_fn=None, clip: float = 1.5) -> np.ndarray:
    """Deterministic (eta=0) reverse integration on an even sub-schedule.

    Shares the trained DDPM model; only the step count changes. The
    predicted clean sample is clipped: near the noise end of the cosine
    schedule alpha_bar is ~1e-7, so epsilon errors amplify by ~1/sqrt of
    that unless the reconstruction is bounded to the valid action range.
    """
    cfg = model.config
    schedule = model.schedule
    if steps > schedule.steps:
        raise ValueError(f"ddim steps {steps} exceed schedule length {schedule.steps}")
    ab = schedule.alpha_bar
    cond = np.asarray(state)[None, :]
    if eps_fn is None:
        def eps_fn(x, k):
            return model.forward(x[None].astype(cfg.np_dtype()), k / schedule.steps, cond)[0]
    taus = np.unique(np.round(np.linspace(0, schedule.steps, steps + 1)).astype(int))
    if x_init is None:
        x_init = rng.standard_normal((cfg.horizon, cfg.action_dim))
    x = np.array(x_init, copy=True)
    for i in range(len(taus) - 1, 0, -1):
        k, k_prev = taus[i], taus[i - 1]
        eps_hat = np.asarray(eps_fn(x, k))
        _maybe_yield()
        x0 = (x - math.sqrt(1.0 - ab[k]) * eps_hat) / math.sqrt(ab[k])
        if clip:
            x0 = np.clip(x0, -clip, clip)
            eps_hat = (x - math.sqrt(ab[k]) * x0) / math.sqrt(1.0 - ab[k])
        x = math.sqrt(ab[k_prev]) * x0 + math.sqrt(1.0 - ab[k_prev]) * eps_hat
    if not np.all(np.isfinite(x)):
        raise NonFiniteSampleError("ddim sample diverged")
    return x


def bc_sample(model: FlowModel, state: np.ndarray) -> np.ndarray:
    """Deterministic regression output (no rng in the signature)."""
    cfg = model.config
    zeros = np.zeros((1, cfg.horizon, cfg.action_dim), dtype=cfg.np_dtype())
    out = model.forward(zeros, 0.0, np.asarray(state)[None, :])[0]
    if not np.all(np.isfinite(out)):
        raise NonFiniteSampleError("bc output non-finite")
    return out


def sample(model: FlowModel, state: np.ndarray, rng: np.random.Generator,
           method: str | None = None, steps: int | None = None) -> np.ndarray:
    """Dispatch on sampling method. 'ddim' runs on a ddpm-trained model."""
    method = method or model.method
    if method == "flow":
        return flow_sample(model, state, steps or 20, rng)
    if method == "ddpm":
        return ddpm_sample(model, state, rng)
    if method == "ddim":
        return ddim_sample(model, state, steps or 20, rng)
    if method == "bc":
        return bc_sample(model, state)
    raise ValueError(f"unknown sampling method {method!r}")


def sample_actions(model: FlowModel, raw_state: np.ndarray,
                   rng: np.random.Generator, method: str | None = None,
                   steps: int | None = None) -> np.ndarray:
    """Sample in raw units: normalize the state, denormalize the actions."""
    if model.norm is None:
        raise ValueError("model has no normalization stats attached")
    state = model.norm.normalize_states(np.asarray(raw_state))
    out = sample(model, state, rng, method=method, steps=steps)
    return model.norm.denormalize_actions(out)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    losses: list = field(default_factory=list)  # running mean per epoch

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else math.nan


def fit(
    model: FlowModel,
    states: np.ndarray,
    actions: np.ndarray,
    epochs: int,
    batch_size: int = 256,
    lr: float = 1e-4,
    seed: int = 0,
    augment=None,
    log_every: int = 0,
    on_epoch=None,
) -> FitResult:
    """Seed-deterministic minibatch training.

    states (W, S) and actions (W, N, D) must already be normalized; augment,
    if given, maps (states_batch, rng) -> states_batch and runs per batch.
    """
    _check_batch(states, actions)
    rng = np.random.default_rng(seed)
    opt = Adam(model.params, lr=lr)
    n = len(states)
    if n == 0:
        raise ValueError("empty training set")
    result = FitResult()
    for epoch in range(epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            sb, ab = states[idx], actions[idx]
            if augment is not None:
                sb = augment(sb, rng)
            if model.method == "flow":
                value = flow_train_step(model, sb, ab, opt, rng)
            elif model.method == "ddpm":
                value = ddpm_train_step(model, sb, ab, opt, rng)
            elif model.method == "bc":
                value = bc_train_step(model, sb, ab, opt)
            else:
                raise ValueError(f"cannot train method {model.method!r}")
            total += value * len(idx)
            count += len(idx)
        result.losses.append(total / count)
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}/{epochs}: loss {result.losses[-1]:.5f}")
        if on_epoch is not None:
            on_epoch(epoch, result.losses[-1])
    return result
