"""Episode loops shared by collection, evaluation, and replay.

All loops follow the same tick structure: read commands from a source
(scripted demonstrator, policy executor, or recorded stream), pass the
continuous contact signals through the hysteresis automatons, forward
accepted switch events to the world, record, then step the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contact import ContactAutomaton, hysteresis_update
from .dataset import Demonstration, Recorder
from .demonstrator import PushDemonstrator, ReachDemonstrator
from .tasks import (
    PushTaskConfig,
    ReachTaskConfig,
    spawn_push_episode,
    spawn_reach_episode,
)
from .world import World, request_contact_switch, step


class DemonstratorStuck(RuntimeError):
    pass


def view_world(world: World):
    from .executor import EffectorView, WorldView

    return WorldView(
        effectors=[
            EffectorView(
                pose=e.pose.copy(),
                transitioning=e.transitioning,
                contact_cmd=e.contact_cmd,
                tau=e.tau(world.clock, world.config.tau_max),
            )
            for e in world.effectors
        ],
        marker_pose=world.marker.pose.copy(),
        marker_age=world.marker.age,
    )


def make_automatons(world: World) -> list:
    return [
        ContactAutomaton(
            contact=e.contact_cmd,
            tau=e.tau(world.clock, world.config.tau_max),
            tau_max=world.config.tau_max,
        )
        for e in world.effectors
    ]


def apply_contact_commands(world, automatons, gammas, dt, recorder=None):
    """Run each effector's gamma through its automaton; forward switch events.

    Rejected switches roll the automaton back (c unchanged, tau preserved)
    so the policy observes the failure through an unchanged contact state.
    """
    for i, gamma in enumerate(gammas):
        aut = automatons[i]
        updated, event = hysteresis_update(aut, gamma, dt)
        if event is not None:
            result = request_contact_switch(world, i, event == "enable")
            if result != "accepted":
                updated = aut.with_tau(aut.tau + dt)  # roll back the flip
            if recorder is not None:
                recorder.add_event(world.clock, i, event, result)
        automatons[i] = updated
    return automatons


def run_scripted_episode(
    task: str,
    seed: int,
    dist: str = "in",
    shape: str = "t",
    reach_cfg: ReachTaskConfig | None = None,
    push_cfg: PushTaskConfig | None = None,
    max_duration: float | None = None,
) -> Demonstration:
    """Collect one scripted demonstration; raises DemonstratorStuck on failure."""
    rng = np.random.default_rng(seed)
    if task == "reach":
        cfg = reach_cfg or ReachTaskConfig()
        world = spawn_reach_episode(rng, dist, cfg)
        demo_ctl = ReachDemonstrator(world, rng)
        task_tag = "reach"
        duration = max_duration or cfg.episode_length
    elif task == "push":
        cfg = push_cfg or PushTaskConfig()
        world = spawn_push_episode(rng, shape, cfg)
        demo_ctl = PushDemonstrator(world, rng)
        task_tag = f"push-{shape}"
        duration = max_duration or cfg.episode_length
    else:
        raise ValueError(f"unknown task {task!r}")

    dt = world.config.dt
    automatons = make_automatons(world)
    recorder = Recorder(n_effectors=len(world.effectors))
    done = False
    while world.clock < duration and not done:
        cmds_gammas, done = demo_ctl.tick(world, world.clock, dt)
        poses = [p for p, _ in cmds_gammas]
        gammas = [g for _, g in cmds_gammas]
        automatons = apply_contact_commands(world, automatons, gammas, dt, recorder)
        recorder.add(
            world.clock,
            poses,
            gammas,
            [a.contact for a in automatons],
            [a.tau for a in automatons],
            world.marker.pose,
            world.marker.age,
        )
        step(world, poses, dt)
    if getattr(demo_ctl, "stuck", False):
        raise DemonstratorStuck(f"seed {seed}: no progress within timeout")
    return recorder.build(
        episode_id=f"{task_tag}-{seed}",
        source="scripted",
        task=task_tag,
        seed=seed,
        config={**cfg.to_dict(), "dist": dist},
        final_state=_final_state(world),
    )


def collect_dataset(
    task: str,
    n_episodes: int,
    seed: int = 0,
    dist: str = "in",
    shape: str = "t",
    reach_cfg: ReachTaskConfig | None = None,
    push_cfg: PushTaskConfig | None = None,
    on_episode=None,
) -> list:
    """Collect episodes with consecutive seeds, skipping stuck ones."""
    demos = []
    ep_seed = seed
    while len(demos) < n_episodes:
        try:
            demo = run_scripted_episode(
                task, ep_seed, dist=dist, shape=shape,
                reach_cfg=reach_cfg, push_cfg=push_cfg,
            )
            demos.append(demo)
            if on_episode:
                on_episode(demo)
        except DemonstratorStuck:
            pass
        ep_seed += 1
    return demos


def run_policy_episode(
    world: World,
    sampler,
    duration: float,
    latency: float = 0.8,
    record: bool = False,
    executor_kwargs: dict | None = None,
    on_tick=None,
):
    """Run the receding-horizon executor in the world for `duration` seconds.

    Returns (world, recorder-or-None, executor). The sampler maps a raw
    state vector to an (N, D) relative action matrix.
    """
    from .dataset import Recorder
    from .encoding import EncodingLayout
    from .executor import Executor

    layout = EncodingLayout(n_effectors=len(world.effectors), n_markers=1)
    executor = Executor(sampler, layout, latency=latency, **(executor_kwargs or {}))
    recorder = Recorder(n_effectors=len(world.effectors)) if record else None
    dt = world.config.dt
    switch_fn = lambda i, desired: request_contact_switch(world, i, desired) == "accepted"
    end = world.clock + duration
    while world.clock < end - 1e-9:
        view = view_world(world)
        result = executor.tick(world.clock, view, dt, switch_fn=switch_fn)
        poses = [p for p, _ in result.commands]
        gammas = [g for _, g in result.commands]
        if recorder is not None:
            recorder.add(
                world.clock, poses, gammas,
                [a.contact for a in executor.automatons],
                [a.tau for a in executor.automatons],
                world.marker.pose, world.marker.age,
            )
            for idx, kind, accepted in result.switch_events:
                recorder.add_event(world.clock, idx, kind,
                                   "accepted" if accepted else "rejected")
        if on_tick is not None:
            on_tick(world, result)
        step(world, poses, dt)
    return world, recorder, executor


def _final_state(world: World) -> dict:
    return {
        "clock": world.clock,
        "box_pose": [
            float(world.box_pose.position[0]),
            float(world.box_pose.position[1]),
            float(world.box_pose.heading),
        ],
        "effectors": [
            {
                "position": [float(e.pose.position[0]), float(e.pose.position[1])],
                "heading": float(e.pose.heading),
                "mode": e.mode,
            }
            for e in world.effectors
        ],
    }


def replay_episode(demo: Demonstration) -> dict:
    """Re-run a recorded episode through the simulator from its seed.

    Feeds the recorded command stream and gamma signals through fresh
    automatons; determinism of the stack makes the final state bit-exact.
    Returns the recomputed final state for comparison.
    """
    from .geom import Pose2

    world = _spawn_from_demo(demo)
    dt = world.config.dt
    automatons = make_automatons(world)
    for k in range(len(demo.t)):
        poses = [
            Pose2(demo.cmds[k, i, :2].copy(), demo.cmds[k, i, 2])
            for i in range(demo.n_effectors)
        ]
        gammas = [float(demo.cmds[k, i, 3]) for i in range(demo.n_effectors)]
        automatons = apply_contact_commands(world, automatons, gammas, dt)
        step(world, poses, dt)
    return _final_state(world)


def _spawn_from_demo(demo: Demonstration) -> World:
    rng = np.random.default_rng(demo.seed)
    if demo.task == "reach":
        world = spawn_reach_episode(rng, _dist_of(demo), ReachTaskConfig())
    elif demo.task.startswith("push"):
        world = spawn_push_episode(rng, demo.task.split("-")[1], PushTaskConfig())
    else:
        raise ValueError(f"cannot respawn task {demo.task!r}")
    return world


def _dist_of(demo: Demonstration) -> str:
    return demo.config.get("dist", "in")
