"""Planar multi-support world: quasi-static box pushing, contact-switch state
machines with transition delays, reach-extension support mechanics, and a
feasibility filter standing in for whole-body retargeting.

Determinism contract: `step` is a pure function of (world state, commands,
dt) plus the world's own seeded generator (consumed only at marker refresh
ticks), so recorded episodes replay bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geom import (
    Pose2,
    ShapeUnion,
    closest_point_on_polygon,
    make_t_shape,
    make_u_shape,
    point_in_convex,
    wrap_angle,
)

CONFIG_VERSION = 1

DISABLED = "disabled"
ENABLING = "enabling"
ENABLED = "enabled"
DISABLING = "disabling"


class ConfigVersionError(ValueError):
    pass


@dataclass
class WorldConfig:
    dt: float = 0.01
    shape: str = "t"
    shape_scale: float = 1.0
    bar_w: float = 0.30
    bar_h: float = 0.10
    stem_w: float = 0.10
    stem_h: float = 0.20
    effector_radius: float = 0.035
    velocity_limit: float = 0.25  # m/s
    angular_velocity_limit: float = 2.0  # rad/s
    push_compliance: float = 0.9  # kappa, rotation per unit moment
    push_length_scale: float = 0.06  # rho, meters
    t_switch: float = 3.0  # contact transition duration, seconds
    marker_rate: float = 30.0
    marker_dropout: float = 0.0
    r_free: float = 0.55
    r_supported: float = 0.85
    base: tuple = (0.0, 0.0)
    tau_max: float = 20.0

    def make_shape(self) -> ShapeUnion:
        s = self.shape_scale
        if self.shape == "t":
            return make_t_shape(self.bar_w * s, self.bar_h * s, self.stem_w * s, self.stem_h * s)
        if self.shape == "u":
            return make_u_shape(self.bar_w * s, self.bar_h * s, self.stem_w * s, self.stem_h * s)
        raise ValueError(f"unknown shape {self.shape!r}")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["base"] = list(self.base)
        d["version"] = CONFIG_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        d = dict(d)
        version = d.pop("version", None)
        if version != CONFIG_VERSION:
            raise ConfigVersionError(f"config version {version} != {CONFIG_VERSION}")
        d["base"] = tuple(d["base"])
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "WorldConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class SupportRegion:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(2)

    def contains(self, p: np.ndarray) -> bool:
        return float(np.linalg.norm(p - self.center)) <= self.radius


@dataclass
class Effector:
    pose: Pose2
    radius: float = 0.035
    mode: str = DISABLED
    transition_end: float = 0.0
    contact_cmd: int = 0  # commanded discrete contact state c
    last_switch_time: float = -1e9

    @property
    def transitioning(self) -> bool:
        return self.mode in (ENABLING, DISABLING)

    @property
    def enabled(self) -> bool:
        return self.mode == ENABLED

    def tau(self, now: float, tau_max: float) -> float:
        return min(now - self.last_switch_time, tau_max)


@dataclass
class MarkerObservation:
    pose: Pose2
    age: float = 0.0
    attached: str = "box"  # "box" or "support:<i>"


@dataclass
class StepEvents:
    rejected_switches: list = field(default_factory=list)
    finished_transitions: list = field(default_factory=list)
    resolution_failure: bool = False


@dataclass
class World:
    config: WorldConfig
    box_shape: ShapeUnion
    box_pose: Pose2
    effectors: list
    supports: list
    target: Pose2
    marker: MarkerObservation
    base: np.ndarray
    clock: float = 0.0
    seed: int = 0
    rng: np.random.Generator = None
    last_events: StepEvents = field(default_factory=StepEvents)

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=np.float64).reshape(2)
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)

    def box_world(self) -> ShapeUnion:
        return self.box_shape.transformed(self.box_pose)

    def attached_pose(self) -> Pose2:
        if self.marker.attached == "box":
            return self.box_pose.copy()
        idx = int(self.marker.attached.split(":")[1])
        return Pose2(self.supports[idx].center.copy(), 0.0)


# ---------------------------------------------------------------------------
# Contact and push mechanics
# ---------------------------------------------------------------------------


def _disk_penetration(center: np.ndarray, radius: float, shape: ShapeUnion):
    """Deepest contact of a disk against the union.

    Returns (depth, push_dir, contact_point) or None. push_dir points from
    the effector into the box: displacing the box by depth*push_dir
    separates the pair.
    """
    inside = shape.contains(center)
    best = None  # (signed_dist, point)
    for part in shape.parts:
        q = closest_point_on_polygon(center, part)
        d = float(np.linalg.norm(q - center))
        if inside and any(
            point_in_convex(q, other, tol=-1e-9)
            for other in shape.parts
            if other is not part
        ):
            # Interior shared edge, not a real boundary point.
            continue
        key = -d if inside else d
        if best is None or key < best[0]:
            best = (key, q, d)
    if best is None:
        return None
    _, point, dist = best
    signed = -dist if inside else dist
    depth = radius - signed
    if depth <= 0.0:
        return None
    delta = point - center
    norm = float(np.linalg.norm(delta))
    if norm < 1e-12:
        # Center exactly on the boundary: push away from the shape centroid.
        fallback = center - shape.centroid
        fn = float(np.linalg.norm(fallback))
        direction = fallback / fn if fn > 1e-12 else np.array([1.0, 0.0])
        direction = -direction
    else:
        direction = delta / norm
        if inside:
            direction = -direction
    return depth, direction, point


def quasi_static_push(
    box_pose: Pose2,
    shape: ShapeUnion,
    push_vec: np.ndarray,
    contact: np.ndarray,
    kappa: float,
    rho: float,
) -> Pose2:
    """Displace the box by a penetration vector applied at a contact point.

    Translation is attenuated and rotation grows with the moment arm from
    the area centroid; kappa trades translation for rotation, rho sets the
    length scale.
    """
    push_vec = np.asarray(push_vec, dtype=np.float64)
    centroid = shape.transformed(box_pose).centroid
    arm = np.asarray(contact, dtype=np.float64) - centroid
    arm_len = float(np.linalg.norm(arm))
    u = arm_len / (arm_len + rho)
    translation = push_vec * (1.0 - kappa * u)
    rot = kappa * float(arm[0] * push_vec[1] - arm[1] * push_vec[0]) / (arm_len + rho) ** 2
    c, s = math.cos(rot), math.sin(rot)
    rel = box_pose.position - centroid
    new_pos = centroid + np.array([c * rel[0] - s * rel[1], s * rel[0] + c * rel[1]]) + translation
    return Pose2(new_pos, box_pose.heading + rot)


def resolve_contacts(world: World, max_iters: int = 5) -> bool:
    """Push the box out of all effector disks; returns True if fully resolved."""
    cfg = world.config
    for _ in range(max_iters):
        moved = False
        shape_w = world.box_world()
        for eff in world.effectors:
            hit = _disk_penetration(eff.pose.position, eff.radius, shape_w)
            if hit is None:
                continue
            depth, direction, point = hit
            world.box_pose = quasi_static_push(
                world.box_pose,
                world.box_shape,
                direction * depth,
                point,
                cfg.push_compliance,
                cfg.push_length_scale,
            )
            shape_w = world.box_world()
            moved = True
        if not moved:
            return True
    # Final check after the iteration budget.
    shape_w = world.box_world()
    return all(
        _disk_penetration(e.pose.position, e.radius, shape_w) is None
        for e in world.effectors
    )


# ---------------------------------------------------------------------------
# Reach / feasibility
# ---------------------------------------------------------------------------


def reach_radius(world: World, idx: int) -> float:
    cfg = world.config
    others_enabled = any(e.enabled for i, e in enumerate(world.effectors) if i != idx)
    return cfg.r_supported if others_enabled else cfg.r_free


def feasibility_filter(cmd: Pose2, world: World, idx: int) -> Pose2:
    """Project a pose command into the reachable disk and clamp the per-tick
    displacement to the velocity limit."""
    cfg = world.config
    eff = world.effectors[idx]
    r = reach_radius(world, idx)
    pos = cmd.position - world.base
    dist = float(np.linalg.norm(pos))
    if dist > r:
        pos = pos * (r / dist)
    pos = pos + world.base
    delta = pos - eff.pose.position
    step_max = cfg.velocity_limit * cfg.dt
    dn = float(np.linalg.norm(delta))
    if dn > step_max:
        pos = eff.pose.position + delta * (step_max / dn)
    dh = wrap_angle(cmd.heading - eff.pose.heading)
    dh_max = cfg.angular_velocity_limit * cfg.dt
    dh = max(-dh_max, min(dh_max, dh))
    return Pose2(pos, eff.pose.heading + dh)


def request_contact_switch(world: World, idx: int, desired: bool) -> str:
    """Ask for a contact transition. Returns 'accepted', 'rejected-region',
    or 'rejected-busy'. Accepted requests start a timed transition during
    which the effector pose is frozen."""
    eff = world.effectors[idx]
    if eff.transitioning:
        return "rejected-busy"
    if desired and eff.mode == DISABLED:
        if not any(s.contains(eff.pose.position) for s in world.supports):
            world.last_events.rejected_switches.append((world.clock, idx))
            return "rejected-region"
        eff.mode = ENABLING
        eff.transition_end = world.clock + world.config.t_switch
        eff.contact_cmd = 1
        eff.last_switch_time = world.clock
        return "accepted"
    if not desired and eff.mode == ENABLED:
        eff.mode = DISABLING
        eff.transition_end = world.clock + world.config.t_switch
        eff.contact_cmd = 0
        eff.last_switch_time = world.clock
        return "accepted"
    return "rejected-busy"


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------


def step(world: World, cmds: list, dt: float | None = None) -> World:
    """Advance the world by one tick under per-effector pose commands.

    Infeasible commands are clamped, never rejected. Mutates and returns the
    world.
    """
    cfg = world.config
    if dt is None:
        dt = cfg.dt
    if dt <= 0:
        raise ValueError("dt must be positive")
    events = StepEvents()

    # Transition expiry first: a transition completing this tick pins/frees
    # the effector before motion integration.
    for i, eff in enumerate(world.effectors):
        if eff.transitioning and world.clock >= eff.transition_end - 1e-12:
            eff.mode = ENABLED if eff.mode == ENABLING else DISABLED
            events.finished_transitions.append((i, eff.mode))

    for i, (eff, cmd) in enumerate(zip(world.effectors, cmds)):
        if eff.transitioning or eff.enabled:
            continue  # pose frozen
        world.effectors[i].pose = feasibility_filter(cmd, world, i)

    if not resolve_contacts(world):
        events.resolution_failure = True

    # Marker refresh on a fixed 30 Hz grid, with Bernoulli dropout.
    period = 1.0 / cfg.marker_rate
    next_tick = math.floor(world.clock / period + 1e-9) + 1
    if world.clock + dt >= next_tick * period - 1e-12:
        if cfg.marker_dropout <= 0.0 or world.rng.random() >= cfg.marker_dropout:
            world.marker.pose = world.attached_pose()
            world.marker.age = 0.0
        else:
            world.marker.age += dt
    else:
        world.marker.age += dt

    world.clock += dt
    world.last_events = events
    return world
