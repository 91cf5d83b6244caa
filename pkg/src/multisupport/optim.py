"""Adam optimizer with bias-corrected moments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
        )


def adam_step(
    params: dict,
    grads: dict,
    state: AdamState,
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected update. Returns (new params dict, state).

    Moment accumulators are updated in place; the returned params are new
    arrays so callers can keep the previous iterate if they want it.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    out = {}
    for k, p in params.items():
        g = grads[k]
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        out[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return out, state


class Adam:
    """Stateful wrapper around adam_step for a dict of parameter Tensors."""

    def __init__(self, params: dict, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState.for_params({k: t.data for k, t in params.items()})

    def step(self):
        raw = {k: t.data for k, t in self.params.items()}
        grads = {}
        for k, t in self.params.items():
            if t.grad is None:
                grads[k] = np.zeros_like(t.data)
            else:
                grads[k] = t.grad
        new, _ = adam_step(raw, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)
        for k, t in self.params.items():
            t.data = new[k].astype(t.data.dtype, copy=False)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None
