"""Executor continuity soak: drive an autonomous run in real time and verify
the command stream never jumps more than one velocity-limit tick and the
control loop never stalls.

Inference runs on the executor's worker thread (newest-wins handoff), so a
stall would indicate the loop blocking on inference or losing the race for
the interpreter; both are defects this soak exists to catch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .encoding import EncodingLayout
from .executor import Executor
from .generative import FlowModel, sample_actions
from .runner import view_world
from .tasks import spawn_push_episode, spawn_reach_episode
from .world import request_contact_switch, step


@dataclass
class SoakReport:
    sim_seconds: float
    ticks: int
    max_gap_ms: float
    max_jump_m: float
    jump_bound_m: float
    stall_bound_ms: float = 15.0
    inferences: int = 0
    overruns: int = 0
    gap_p99_ms: float = 0.0

    def ok(self) -> bool:
        return (
            self.max_gap_ms <= self.stall_bound_ms
            and self.max_jump_m <= self.jump_bound_m
            and self.overruns == 0
        )

    def summary(self) -> str:
        status = "PASS" if self.ok() else "FAIL"
        return (
            f"[{status}] soak {self.sim_seconds:.0f}s sim ({self.ticks} ticks): "
            f"max stall {self.max_gap_ms:.2f} ms (p99 {self.gap_p99_ms:.2f}, "
            f"bound {self.stall_bound_ms}), max command jump "
            f"{self.max_jump_m * 1000:.3f} mm (bound {self.jump_bound_m * 1000:.3f} mm), "
            f"{self.inferences} inferences, {self.overruns} overruns"
        )


def run_soak(
    checkpoint: str | None = None,
    model: FlowModel | None = None,
    minutes: float = 10.0,
    task: str = "push",
    seed: int = 0,
    realtime: bool = True,
    method: str | None = None,
    steps: int = 20,
) -> SoakReport:
    if model is None:
        model = FlowModel.load(checkpoint)
    if realtime:
        # Worker-thread inference must cede the interpreter to the control
        # loop between network evaluations.
        from . import generative

        generative.COOPERATIVE_YIELD_S = 0.002
    world_rng = np.random.default_rng(1_000_000 + seed)
    if task == "push":
        world = spawn_push_episode(world_rng, "t")
    else:
        world = spawn_reach_episode(world_rng, "in")
    s_rng = np.random.default_rng(2_000_000 + seed)
    sampler = lambda st: sample_actions(model, st, s_rng, method=method, steps=steps)
    layout = EncodingLayout(n_effectors=len(world.effectors), n_markers=1)
    executor = Executor(sampler, layout, latency=0.0, async_mode=realtime)
    if not realtime:
        executor = Executor(sampler, layout, latency=0.8, async_mode=False)

    dt = world.config.dt
    bound = world.config.velocity_limit * dt * (1 + 1e-6)
    switch_fn = lambda i, d: request_contact_switch(world, i, d) == "accepted"

    total_ticks = int(round(minutes * 60.0 / dt))
    prev_cmd = None
    max_jump = 0.0
    gaps = []
    inferences = 0
    next_wall = time.perf_counter()
    last_start = None
    for tick_idx in range(total_ticks):
        start = time.perf_counter()
        # The first inference primes the stream before streaming starts and
        # is allowed to block; gaps are measured once streaming is live.
        if last_start is not None and tick_idx >= 2:
            gaps.append(start - last_start)
        last_start = start
        view = view_world(world)
        result = executor.tick(world.clock, view, dt, switch_fn=switch_fn)
        inferences += result.inference_started
        cmd = np.array([
            [p.position[0], p.position[1]] for p, _ in result.commands
        ])
        if prev_cmd is not None:
            jump = float(np.max(np.linalg.norm(cmd - prev_cmd, axis=1)))
            max_jump = max(max_jump, jump)
        prev_cmd = cmd
        step(world, [p for p, _ in result.commands], dt)
        if realtime:
            next_wall += dt
            delay = next_wall - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            else:
                next_wall = time.perf_counter()
    gaps_ms = np.asarray(gaps) * 1000.0
    return SoakReport(
        sim_seconds=minutes * 60.0,
        ticks=total_ticks,
        max_gap_ms=float(gaps_ms.max()) if len(gaps_ms) else 0.0,
        gap_p99_ms=float(np.percentile(gaps_ms, 99)) if len(gaps_ms) else 0.0,
        max_jump_m=max_jump,
        jump_bound_m=bound,
        inferences=inferences,
        overruns=executor.overruns,
    )
