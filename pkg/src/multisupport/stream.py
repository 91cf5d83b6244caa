"""Command stream processing: resampling, stitching, zero-phase filtering.

A CommandSegment is a uniformly sampled block of per-effector commands with
channels [x, y, heading, gamma]. Heading channels are kept CONTINUOUS
(unwrapped) inside segments so plain linear interpolation is valid; they are
wrapped only when poses are rebuilt. Blending across segments is wrap-aware
anyway, since two segments may live on different branches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEADING_CHANNEL = 2


class StitchCoverageError(RuntimeError):
    """The previous stream ends before the blend window completes."""


def _wrap_array(a: np.ndarray) -> np.ndarray:
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)


@dataclass
class CommandSegment:
    t0: float
    rate: float
    data: np.ndarray  # (T, E, 4)

    @property
    def t_end(self) -> float:
        return self.t0 + (len(self.data) - 1) / self.rate

    def sample(self, t: float) -> np.ndarray:
        """Linear interpolation at time t; clamped to segment ends."""
        x = (t - self.t0) * self.rate
        if x <= 0.0:
            return self.data[0].copy()
        if x >= len(self.data) - 1:
            return self.data[-1].copy()
        i = int(x)
        frac = x - i
        return (1.0 - frac) * self.data[i] + frac * self.data[i + 1]

    def trimmed(self, t_from: float) -> "CommandSegment":
        """Drop samples strictly before t_from (keeps one sample of slack)."""
        i = int(np.floor((t_from - self.t0) * self.rate))
        if i <= 0:
            return self
        i = min(i, len(self.data) - 1)
        return CommandSegment(self.t0 + i / self.rate, self.rate, self.data[i:])


def resample_linear(
    data: np.ndarray, t0: float, src_rate: float, dst_rate: float
) -> CommandSegment:
    """Resample (N, E, 4) commands to dst_rate with endpoint preservation.

    Headings are unwrapped per effector first so interpolation follows the
    shortest arc.
    """
    data = np.asarray(data, dtype=np.float64)
    if len(data) < 2:
        raise ValueError("need at least 2 samples to resample")
    work = data.copy()
    work[:, :, HEADING_CHANNEL] = np.unwrap(work[:, :, HEADING_CHANNEL], axis=0)
    duration = (len(data) - 1) / src_rate
    n_out = int(round(duration * dst_rate)) + 1
    src_t = np.arange(len(data)) / src_rate
    dst_t = np.arange(n_out) / dst_rate
    dst_t[-1] = min(dst_t[-1], duration)
    flat = work.reshape(len(data), -1)
    out = np.empty((n_out, flat.shape[1]))
    for j in range(flat.shape[1]):
        out[:, j] = np.interp(dst_t, src_t, flat[:, j])
    return CommandSegment(t0, dst_rate, out.reshape(n_out, *data.shape[1:]))


def zero_phase_filter(data: np.ndarray, alpha: float) -> np.ndarray:
    """First-order exponential filter run forward then backward over axis 0.

    The double pass cancels the phase lag; DC gain stays 1. Heading channels
    must already be continuous (unwrapped).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if alpha == 1.0:
        return data.copy()
    out = data.astype(np.float64).copy()
    for i in range(1, len(out)):
        out[i] = alpha * out[i] + (1.0 - alpha) * out[i - 1]
    for i in range(len(out) - 2, -1, -1):
        out[i] = alpha * out[i] + (1.0 - alpha) * out[i + 1]
    return out


def stitch(
    prev: CommandSegment,
    new: CommandSegment,
    t_now: float,
    blend: float = 0.5,
) -> CommandSegment:
    """Blend prev into new over [t_now, t_now + blend], then follow new.

    The result starts at t_now on the new segment's tick grid. Heading
    channels blend along the shortest arc.
    """
    if prev.t_end + 1e-9 < t_now + blend:
        raise StitchCoverageError(
            f"previous stream ends at {prev.t_end:.3f}s but blend needs "
            f"coverage to {t_now + blend:.3f}s"
        )
    rate = new.rate
    n = len(new.data) - int(round((t_now - new.t0) * rate))
    times = t_now + np.arange(n) / rate
    out = np.empty((n,) + new.data.shape[1:])
    for i, t in enumerate(times):
        nv = new.sample(t)
        if t >= t_now + blend:
            out[i] = nv
            continue
        w = (t - t_now) / blend if blend > 0 else 1.0
        pv = prev.sample(t)
        mix = (1.0 - w) * pv + w * nv
        dh = _wrap_array(nv[:, HEADING_CHANNEL] - pv[:, HEADING_CHANNEL])
        mix[:, HEADING_CHANNEL] = pv[:, HEADING_CHANNEL] + w * dh
        out[i] = mix
    return CommandSegment(t_now, rate, out)
