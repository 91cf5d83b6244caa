"""Task generators and outcome metrics for the two benchmarks.

Reach: one support-capable effector must establish contact on one of two
platforms (the bimodal corpus). Push: a manipulation effector pushes a
T-shaped box to a fixed target, with a second effector providing reach
extension through support contact.

All randomization windows are calibration parameters, not paper values;
they are tuned so the scripted demonstrators succeed reliably.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geom import Pose2, overlap_distance
from .world import (
    Effector,
    MarkerObservation,
    SupportRegion,
    World,
    WorldConfig,
)

TASK_CONFIG_VERSION = 1

IN_DISTRIBUTION = "in"
OUT_OF_DISTRIBUTION = "ood"


@dataclass
class Window:
    center: tuple
    half: tuple

    def sample(self, rng) -> np.ndarray:
        c, h = np.asarray(self.center), np.asarray(self.half)
        return rng.uniform(c - h, c + h)

    def contains(self, p) -> bool:
        c, h = np.asarray(self.center), np.asarray(self.half)
        return bool(np.all(np.abs(np.asarray(p) - c) <= h))


def sample_outside(nominal: Window, wide: Window, rng) -> np.ndarray:
    """Rejection-sample from the wide window until outside the nominal one."""
    for _ in range(1000):
        p = wide.sample(rng)
        if not nominal.contains(p):
            return p
    raise RuntimeError("rejection sampling failed; windows likely coincide")


@dataclass
class ReachTaskConfig:
    platform_radius: float = 0.06
    platform_offset: tuple = (0.24, 0.0)  # right platform relative to left
    pair_center: Window = field(default_factory=lambda: Window((0.0, 0.50), (0.15, 0.10)))
    pair_center_wide: Window = field(default_factory=lambda: Window((0.0, 0.50), (0.27, 0.18)))
    hand_start: Window = field(default_factory=lambda: Window((0.0, 0.18), (0.12, 0.07)))
    hand_start_wide: Window = field(default_factory=lambda: Window((0.0, 0.18), (0.22, 0.13)))
    # Kept under start-tau + dwell so a late spurious low gamma cannot
    # un-switch an established contact within the episode.
    episode_length: float = 20.0
    world: WorldConfig = field(default_factory=lambda: WorldConfig(r_free=0.95, r_supported=1.2))

    def to_dict(self) -> dict:
        return {
            "version": TASK_CONFIG_VERSION,
            "task": "reach",
            "platform_radius": self.platform_radius,
            "platform_offset": list(self.platform_offset),
            "pair_center": [list(self.pair_center.center), list(self.pair_center.half)],
            "pair_center_wide": [list(self.pair_center_wide.center), list(self.pair_center_wide.half)],
            "hand_start": [list(self.hand_start.center), list(self.hand_start.half)],
            "hand_start_wide": [list(self.hand_start_wide.center), list(self.hand_start_wide.half)],
            "episode_length": self.episode_length,
            "world": self.world.to_dict(),
        }


@dataclass
class PushTaskConfig:
    shape: str = "t"
    shape_scale: float = 0.8
    box_window: Window = field(default_factory=lambda: Window((0.0, 0.46), (0.12, 0.06)))
    target: tuple = (0.0, 0.46, 0.0)  # x, y, heading; fixed across episodes
    support_center: tuple = (0.24, 0.16)
    support_radius: float = 0.10
    hand_start: tuple = (-0.10, 0.16)
    support_start: tuple = (0.16, 0.10)
    episode_length: float = 300.0
    world: WorldConfig = field(default_factory=WorldConfig)

    def to_dict(self) -> dict:
        return {
            "version": TASK_CONFIG_VERSION,
            "task": "push",
            "shape": self.shape,
            "shape_scale": self.shape_scale,
            "box_window": [list(self.box_window.center), list(self.box_window.half)],
            "target": list(self.target),
            "support_center": list(self.support_center),
            "support_radius": self.support_radius,
            "hand_start": list(self.hand_start),
            "support_start": list(self.support_start),
            "episode_length": self.episode_length,
            "world": self.world.to_dict(),
        }


def save_task_config(cfg, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2))


def spawn_reach_episode(
    rng: np.random.Generator,
    dist: str = IN_DISTRIBUTION,
    cfg: ReachTaskConfig | None = None,
) -> World:
    """Two support platforms and one free effector; marker on the left platform."""
    cfg = cfg or ReachTaskConfig()
    if dist == IN_DISTRIBUTION:
        pair = cfg.pair_center.sample(rng)
        hand = cfg.hand_start.sample(rng)
    elif dist == OUT_OF_DISTRIBUTION:
        pair = sample_outside(cfg.pair_center, cfg.pair_center_wide, rng)
        hand = sample_outside(cfg.hand_start, cfg.hand_start_wide, rng)
    else:
        raise ValueError(f"unknown distribution {dist!r}")
    offset = np.asarray(cfg.platform_offset)
    left = pair - offset / 2
    right = pair + offset / 2
    world_cfg = cfg.world
    world = World(
        config=world_cfg,
        box_shape=world_cfg.make_shape(),
        box_pose=Pose2([100.0, 100.0]),  # parked far away; reach has no box
        effectors=[Effector(Pose2(hand), radius=world_cfg.effector_radius)],
        supports=[
            SupportRegion(left, cfg.platform_radius),
            SupportRegion(right, cfg.platform_radius),
        ],
        target=Pose2([100.0, 100.0]),
        marker=MarkerObservation(Pose2(left.copy()), age=0.0, attached="support:0"),
        base=np.asarray(world_cfg.base),
        seed=int(rng.integers(2**63)),
    )
    return world


def spawn_push_episode(
    rng: np.random.Generator,
    shape: str | None = None,
    cfg: PushTaskConfig | None = None,
) -> World:
    """Box pose randomized in the window, heading uniform; fixed target."""
    cfg = cfg or PushTaskConfig()
    shape = shape or cfg.shape
    world_cfg = cfg.world
    world_cfg.shape = shape
    world_cfg.shape_scale = cfg.shape_scale
    pos = cfg.box_window.sample(rng)
    heading = rng.uniform(-math.pi, math.pi)
    box_pose = Pose2(pos, heading)
    world = World(
        config=world_cfg,
        box_shape=world_cfg.make_shape(),
        box_pose=box_pose,
        effectors=[
            Effector(Pose2(np.asarray(cfg.hand_start)), radius=world_cfg.effector_radius),
            Effector(Pose2(np.asarray(cfg.support_start)), radius=world_cfg.effector_radius),
        ],
        supports=[SupportRegion(np.asarray(cfg.support_center), cfg.support_radius)],
        target=Pose2(np.asarray(cfg.target[:2]), cfg.target[2]),
        marker=MarkerObservation(box_pose.copy(), age=0.0, attached="box"),
        base=np.asarray(world_cfg.base),
        seed=int(rng.integers(2**63)),
    )
    return world


@dataclass
class ReachOutcome:
    success: bool
    error_cm: float
    contact_established: bool


def reach_outcome(world: World, effector_idx: int = 0) -> ReachOutcome:
    """Success iff the support contact is enabled within 8 cm of a platform."""
    eff = world.effectors[effector_idx]
    dist_m = min(
        float(np.linalg.norm(eff.pose.position - s.center)) for s in world.supports
    )
    established = eff.enabled
    return ReachOutcome(
        success=established and dist_m * 100.0 < 8.0,
        error_cm=dist_m * 100.0,
        contact_established=established,
    )


def push_error(world: World) -> float:
    """Normalized overlapping distance between the box and the target pose."""
    return overlap_distance(
        world.box_shape.transformed(world.box_pose),
        world.box_shape.transformed(world.target),
    )
