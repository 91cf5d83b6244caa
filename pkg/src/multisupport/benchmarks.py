"""Benchmark harness: reach and push evaluations plus inference timing.

Every trial is seed-reproducible: world seeds and sampling seeds are derived
from the benchmark seed and recorded in the report.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .generative import FlowModel, sample, sample_actions
from .runner import run_policy_episode
from .tasks import (
    PushTaskConfig,
    ReachTaskConfig,
    push_error,
    reach_outcome,
    spawn_push_episode,
    spawn_reach_episode,
)

WORLD_SEED_BASE = 1_000_000
SAMPLER_SEED_BASE = 2_000_000


def quartiles(values) -> tuple:
    """(median, q1, q3) by linear interpolation between order statistics.

    Returns NaNs for empty input (e.g., no trial established contact).
    """
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        return (float("nan"),) * 3
    return (
        float(np.percentile(arr, 50)),
        float(np.percentile(arr, 25)),
        float(np.percentile(arr, 75)),
    )


@dataclass
class ReachRow:
    method: str
    inference_ms_mean: float = float("nan")
    inference_ms_std: float = float("nan")
    in_success: float = float("nan")
    in_median_cm: float = float("nan")
    in_q1_cm: float = float("nan")
    in_q3_cm: float = float("nan")
    ood_success: float = float("nan")
    ood_median_cm: float = float("nan")
    ood_q1_cm: float = float("nan")
    ood_q3_cm: float = float("nan")
    seed: int = 0

    COLUMNS = (
        "method", "inference_ms_mean", "inference_ms_std",
        "in_success", "in_median_cm", "in_q1_cm", "in_q3_cm",
        "ood_success", "ood_median_cm", "ood_q1_cm", "ood_q3_cm", "seed",
    )

    def as_row(self) -> list:
        return [getattr(self, c) for c in self.COLUMNS]


@dataclass
class PushCurve:
    method: str
    times: np.ndarray  # (K,) sample times in seconds
    curves: np.ndarray  # (n_trials, K) best-so-far error per trial
    seed: int = 0

    @property
    def final_errors(self) -> np.ndarray:
        return self.curves[:, -1]


def make_sampler(model: FlowModel, rng: np.random.Generator,
                 method: str | None = None, steps: int | None = None):
    return lambda state: sample_actions(model, state, rng, method=method, steps=steps)


def run_reach_benchmark(
    model: FlowModel,
    n: int = 100,
    dist: str = "in",
    seed: int = 0,
    method: str | None = None,
    steps: int | None = None,
    cfg: ReachTaskConfig | None = None,
    latency: float = 0.8,
    episode_length: float | None = None,
    sampler_factory=None,
) -> dict:
    """Seeded reach trials; quartiles computed over trials that established
    contact. Returns a dict fragment for a ReachRow."""
    cfg = cfg or ReachTaskConfig()
    successes = 0
    errors = []
    for trial in range(n):
        world_rng = np.random.default_rng(WORLD_SEED_BASE + seed * 10_000 + trial)
        world = spawn_reach_episode(world_rng, dist, cfg)
        s_rng = np.random.default_rng(SAMPLER_SEED_BASE + seed * 10_000 + trial)
        if sampler_factory is not None:
            sampler = sampler_factory(s_rng)
        else:
            sampler = make_sampler(model, s_rng, method=method, steps=steps)
        run_policy_episode(
            world, sampler, duration=episode_length or cfg.episode_length,
            latency=latency,
        )
        outcome = reach_outcome(world)
        successes += outcome.success
        if outcome.contact_established:
            errors.append(outcome.error_cm)
    med, q1, q3 = quartiles(errors)
    key = "in" if dist == "in" else "ood"
    return {
        f"{key}_success": successes / n,
        f"{key}_median_cm": med,
        f"{key}_q1_cm": q1,
        f"{key}_q3_cm": q3,
    }


def run_push_benchmark(
    model: FlowModel | None,
    n: int = 100,
    horizon_s: float = 300.0,
    seed: int = 0,
    method: str | None = None,
    steps: int | None = None,
    shape: str = "t",
    cfg: PushTaskConfig | None = None,
    latency: float = 0.8,
    sample_period: float = 1.0,
    sampler_factory=None,
) -> PushCurve:
    """Best-so-far push error curves over seeded trials."""
    cfg = cfg or PushTaskConfig()
    times = np.arange(0.0, horizon_s + 1e-9, sample_period)
    curves = np.empty((n, len(times)))
    for trial in range(n):
        world_rng = np.random.default_rng(WORLD_SEED_BASE + seed * 10_000 + trial)
        world = spawn_push_episode(world_rng, shape, cfg)
        s_rng = np.random.default_rng(SAMPLER_SEED_BASE + seed * 10_000 + trial)
        if sampler_factory is not None:
            sampler = sampler_factory(s_rng)
        else:
            sampler = make_sampler(model, s_rng, method=method, steps=steps)
        best = push_error(world)
        series = [best]
        next_idx = 1

        def on_tick(w, result, series=series):
            nonlocal best, next_idx
            if next_idx < len(times) and w.clock >= times[next_idx] - 1e-9:
                best = min(best, push_error(w))
                series.append(best)
                next_idx += 1
            elif int(round(w.clock / w.config.dt)) % 25 == 0:
                best = min(best, push_error(w))

        run_policy_episode(world, sampler, duration=horizon_s, latency=latency,
                           on_tick=on_tick)
        while len(series) < len(times):
            series.append(best)
        curves[trial] = series
    return PushCurve(method=method or (model.method if model else "?"),
                     times=times, curves=curves, seed=seed)


def time_inference(model: FlowModel, n: int = 200, warmup: int = 10,
                   method: str | None = None, steps: int | None = None,
                   state: np.ndarray | None = None, seed: int = 0) -> tuple:
    """Wall-clock mean and std (ms) of a full sample call on a fixed state."""
    rng = np.random.default_rng(SAMPLER_SEED_BASE + seed)
    if state is None:
        state = np.zeros(model.config.state_dim)
    durations = []
    for i in range(n + warmup):
        t0 = time.perf_counter()
        sample(model, state, rng, method=method, steps=steps)
        durations.append((time.perf_counter() - t0) * 1000.0)
    timed = np.asarray(durations[warmup:])
    return float(timed.mean()), float(timed.std())


def emit_report(rows: list, curves: list, out_dir) -> dict:
    """Write reach rows as CSV, push curves as per-trial CSV series, and a
    plain-text summary. Deterministic column order; returns file paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}

    reach_path = out_dir / "reach.csv"
    lines = [",".join(ReachRow.COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row.as_row()))
    reach_path.write_text("\n".join(lines) + "\n")
    paths["reach"] = reach_path

    for curve in curves:
        p = out_dir / f"push_{curve.method}.csv"
        header = "time_s," + ",".join(f"trial_{i}" for i in range(len(curve.curves)))
        body = [header]
        for j, t in enumerate(curve.times):
            body.append(
                f"{t:.1f}," + ",".join(f"{curve.curves[i, j]:.6f}" for i in range(len(curve.curves)))
            )
        p.write_text("\n".join(body) + "\n")
        paths[f"push_{curve.method}"] = p

    summary = out_dir / "summary.txt"
    text = []
    for row in rows:
        text.append(
            f"{row.method}: inference {row.inference_ms_mean:.1f}+-{row.inference_ms_std:.1f} ms | "
            f"in-dist {row.in_success * 100:.0f}% median {row.in_median_cm:.1f} cm "
            f"[{row.in_q1_cm:.1f}, {row.in_q3_cm:.1f}] | "
            f"ood {row.ood_success * 100:.0f}% median {row.ood_median_cm:.1f} cm "
            f"[{row.ood_q1_cm:.1f}, {row.ood_q3_cm:.1f}] (seed {row.seed})"
        )
    for curve in curves:
        med, q1, q3 = quartiles(curve.final_errors)
        text.append(
            f"push {curve.method}: final best-so-far error median {med:.3f} "
            f"[{q1:.3f}, {q3:.3f}] over {len(curve.curves)} trials (seed {curve.seed})"
        )
    summary.write_text("\n".join(text) + "\n")
    paths["summary"] = summary
    return paths


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
