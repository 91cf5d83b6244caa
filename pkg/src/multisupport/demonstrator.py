"""Scripted demonstrators standing in for the human teleoperator.

Both demonstrators emit pose commands plus continuous contact targets at the
control rate, with seeded waypoint jitter and idle pauses so the corpus has
human-like variability. The reach demonstrator picks its platform by coin
flip, reproducing the bimodal corpus; the push demonstrator greedily picks
box-face pushes by virtually rolling out the world's own contact mechanics
and requests support contact whenever the required reach exceeds the free
radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geom import (
    Pose2,
    closest_point_on_polygon,
    overlap_distance,
    wrap_angle,
)
from .tasks import push_error
from .world import (
    DISABLED,
    ENABLED,
    World,
    _disk_penetration,
    quasi_static_push,
)


@dataclass
class _Mover:
    """Open-loop command integrator: walks a command point along waypoints."""

    pos: np.ndarray
    speed: float = 0.14
    waypoints: list = field(default_factory=list)
    pause_until: float = 0.0

    def busy(self) -> bool:
        return bool(self.waypoints)

    def tick(self, t: float, dt: float) -> np.ndarray:
        if t < self.pause_until or not self.waypoints:
            return self.pos.copy()
        target = self.waypoints[0]
        delta = target - self.pos
        d = float(np.linalg.norm(delta))
        step = self.speed * dt
        if d <= step:
            self.pos = target.copy()
            self.waypoints.pop(0)
        else:
            self.pos = self.pos + delta * (step / d)
        return self.pos.copy()


class ReachDemonstrator:
    """Moves the hand to one platform (coin flip), then enables contact."""

    def __init__(self, world: World, rng: np.random.Generator):
        self.rng = rng
        self.platform = int(rng.integers(2))
        target = world.supports[self.platform].center
        jitter = np.clip(rng.normal(0.0, 0.010, 2), -0.022, 0.022)
        self.goal = target + jitter
        start = world.effectors[0].pose.position.copy()
        self.mover = _Mover(pos=start, speed=float(rng.uniform(0.10, 0.18)))
        mid = start + (self.goal - start) * rng.uniform(0.35, 0.65)
        side = np.array([-(self.goal - start)[1], (self.goal - start)[0]])
        side_n = float(np.linalg.norm(side))
        if side_n > 1e-9:
            mid = mid + side / side_n * rng.normal(0.0, 0.03)
        self.mover.waypoints = [mid, self.goal.copy()]
        self.pause_at_mid = rng.random() < 0.5
        self.pause_len = float(rng.uniform(0.2, 0.8))
        self._paused_once = False
        self.settle_until = None
        self.gamma = 0.0
        self.done_at = None

    def tick(self, world: World, t: float, dt: float):
        eff = world.effectors[0]
        if (
            self.pause_at_mid
            and not self._paused_once
            and len(self.mover.waypoints) == 1
        ):
            self.mover.pause_until = t + self.pause_len
            self._paused_once = True
        pos = self.mover.tick(t, dt)
        if not self.mover.busy() and self.settle_until is None:
            self.settle_until = t + float(self.rng.uniform(0.3, 0.6))
        if self.settle_until is not None and t >= self.settle_until:
            self.gamma = 1.0
        if eff.mode == ENABLED and self.done_at is None:
            self.done_at = t + 2.0  # hold so windows see the enabled state
        done = self.done_at is not None and t >= self.done_at
        return [(Pose2(pos), self.gamma)], done


# ---------------------------------------------------------------------------
# Push demonstrator
# ---------------------------------------------------------------------------


@dataclass
class _PushPlan:
    start: np.ndarray
    push_target: np.ndarray
    contact: np.ndarray
    normal: np.ndarray
    advance: float
    needs_support: bool
    score: float


def _outer_contact_points(world: World, fractions=(0.18, 0.38, 0.5, 0.62, 0.82)):
    """Candidate (contact point, outward normal) pairs on the union boundary."""
    shape = world.box_world()
    out = []
    for part in shape.parts:
        n = len(part)
        for i in range(n):
            a, b = part[i], part[(i + 1) % n]
            edge = b - a
            el = float(np.linalg.norm(edge))
            if el < 1e-9:
                continue
            normal = np.array([edge[1], -edge[0]]) / el  # outward for CCW
            for f in fractions:
                c = a + edge * f
                probe = c + normal * 1e-6
                if any(
                    _strictly_inside(probe, other)
                    for other in shape.parts
                    if other is not part
                ):
                    continue  # interior shared edge
                out.append((c, normal))
    return out


def _strictly_inside(p, poly) -> bool:
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        if (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax) <= 1e-9:
            return False
    return True


def _clearance_to_shape(p: np.ndarray, shape) -> float:
    if shape.contains(p):
        return 0.0
    return min(
        float(np.linalg.norm(closest_point_on_polygon(p, part) - p))
        for part in shape.parts
    )


def _segment_clear(world: World, a: np.ndarray, b: np.ndarray, clearance: float) -> bool:
    shape = world.box_world()
    d = float(np.linalg.norm(b - a))
    n = max(2, int(d / 0.01))
    for i in range(n + 1):
        p = a + (b - a) * (i / n)
        if _clearance_to_shape(p, shape) < clearance:
            return False
    return True


class PushDemonstrator:
    """Greedy face-pushing strategy with support management.

    Each cycle: virtually roll out candidate pushes with the world's own
    mechanics, score by overlap-error decrease plus heading-error shaping,
    walk (around the box if needed) to the best start point, push, retreat,
    repeat. Stops once the error drops below stop_error; flags stuck after
    stuck_timeout seconds without improvement.
    """

    def __init__(
        self,
        world: World,
        rng: np.random.Generator,
        stop_error: float = 0.10,
        stuck_timeout: float = 120.0,
    ):
        self.rng = rng
        self.stop_error = stop_error
        self.stuck_timeout = stuck_timeout
        self.state = "choose"
        self.phase = "rotate"
        self.hand = _Mover(pos=world.effectors[0].pose.position.copy(), speed=0.16)
        self.support = _Mover(pos=world.effectors[1].pose.position.copy(), speed=0.16)
        self.gammas = [0.0, 0.0]
        self.plan = None
        self.best_progress = math.inf
        self.best_progress_t = 0.0
        self.done_at = None
        self.stuck = False
        self.standoff = 0.05
        # Strong heading preservation: off-center pushes rotate a lot under
        # the compliant push model, and trading heading for overlap creates
        # place/rotate limit cycles.
        self.heading_weight = 0.35
        self.advances = (0.004, 0.012, 0.035, 0.09)

    # -- virtual rollout ----------------------------------------------------

    def _rollout(self, world: World, start, push_target, radius):
        """Predicted box pose after sliding the effector start -> target."""
        cfg = world.config
        pose = world.box_pose.copy()
        total = push_target - start
        dist = float(np.linalg.norm(total))
        if dist < 1e-9:
            return pose
        u = total / dist
        steps = max(1, int(dist / 0.004))
        for i in range(steps):
            p = start + u * (dist * (i + 1) / steps)
            for _ in range(5):
                hit = _disk_penetration(p, radius, world.box_shape.transformed(pose))
                if hit is None:
                    break
                depth, direction, point = hit
                pose = quasi_static_push(
                    pose, world.box_shape, direction * depth, point,
                    cfg.push_compliance, cfg.push_length_scale,
                )
        return pose

    def _update_phase(self, world: World):
        dh = abs(wrap_angle(world.target.heading - world.box_pose.heading))
        pos_err = float(np.linalg.norm(world.box_pose.position - world.target.position))
        if pos_err > 0.22:
            # Drifted far: drag the box back before worrying about heading.
            self.phase = "place"
        elif self.phase == "place" and dh > 0.35:
            self.phase = "rotate"
        elif self.phase == "rotate" and dh < 0.12:
            self.phase = "place"

    def _candidates(self, world: World) -> list:
        cfg = world.config
        err = push_error(world)
        dh = abs(wrap_angle(world.target.heading - world.box_pose.heading))
        pos_err = float(np.linalg.norm(world.box_pose.position - world.target.position))
        eff = world.effectors[0]
        support_on = world.effectors[1].enabled
        shape_now = world.box_world()
        leash = 0.10  # fixed, so rotation drift cannot ratchet outward
        plans = []
        for c, n in _outer_contact_points(world):
            start = c + n * (eff.radius + self.standoff)
            if _clearance_to_shape(start, shape_now) < eff.radius + 0.008:
                continue  # start pocketed against another face
            far = float(np.linalg.norm(start - world.base))
            needs_support = far > cfg.r_free - 0.02
            if far > cfg.r_supported - 0.02:
                continue  # unreachable even with support
            if needs_support and not support_on and not self._support_possible(world):
                continue
            travel = float(np.linalg.norm(start - eff.pose.position))
            for advance in self.advances:
                push_target = c + n * (eff.radius - advance)
                virtual = self._rollout(world, start, push_target, eff.radius)
                new_dh = abs(wrap_angle(world.target.heading - virtual.heading))
                new_pos = float(np.linalg.norm(virtual.position - world.target.position))
                if new_pos > 0.28:
                    continue  # would shove the box toward the reach boundary
                if self.phase == "rotate":
                    # Chase heading; keep the box on a position leash.
                    score = (
                        (dh - new_dh)
                        - 1.5 * max(0.0, new_pos - leash)
                        - 0.015 * travel
                    )
                else:
                    new_err = overlap_distance(
                        world.box_shape.transformed(virtual),
                        world.box_shape.transformed(world.target),
                    )
                    score = (
                        (err - new_err)
                        + self.heading_weight * (dh - new_dh)
                        - 0.015 * travel
                    )
                score -= 0.01 if needs_support and not support_on else 0.0
                score += float(self.rng.normal(0.0, 0.002))  # decohere ties
                plans.append(
                    _PushPlan(start, push_target, c, n, advance,
                              needs_support and not support_on, score)
                )
        plans.sort(key=lambda p: -p.score)
        return plans

    def _support_possible(self, world: World) -> bool:
        return world.effectors[1].mode == DISABLED

    # -- state machine ------------------------------------------------------

    def _progress_metric(self, world: World) -> float:
        # Position plus heading progress: rotation phases are progress even
        # while the overlap error is momentarily flat.
        dh = abs(wrap_angle(world.target.heading - world.box_pose.heading))
        pos = float(np.linalg.norm(world.box_pose.position - world.target.position))
        return pos + 0.15 * dh

    def tick(self, world: World, t: float, dt: float):
        progress = self._progress_metric(world)
        if progress < self.best_progress - 0.002:
            self.best_progress = progress
            self.best_progress_t = t
        if t - self.best_progress_t > self.stuck_timeout:
            # A stall at a good error is a graceful stop, not a failure.
            if push_error(world) < 0.2:
                self.state = "finish"
                self.done_at = t
            else:
                self.stuck = True
                return self._emit(t, dt), True

        if self.state == "choose":
            self._update_phase(world)
            err = push_error(world)
            if err < self.stop_error:
                self.state = "finish"
                self.done_at = t + 1.5
            else:
                plans = self._candidates(world)
                if not plans or plans[0].score <= -0.05:
                    self.stuck = True
                    return self._emit(t, dt), True
                self.plan = plans[0]
                if self.plan.needs_support:
                    goal = world.supports[0].center + np.clip(
                        self.rng.normal(0.0, 0.015, 2), -0.03, 0.03
                    )
                    self.support.speed = 0.18
                    self.support.waypoints = self._route(world, self.support.pos, goal)
                    self.state = "goto_support"
                else:
                    self._start_approach(world)

        elif self.state == "goto_support":
            if not self.support.busy():
                self.gammas[1] = 1.0
                self.state = "wait_support"

        elif self.state == "wait_support":
            if world.effectors[1].enabled:
                self._start_approach(world)

        elif self.state == "approach":
            if not self.hand.busy():
                self.hand.speed = 0.08  # quasi-static push speed
                self.hand.waypoints = [self.plan.push_target.copy()]
                self.state = "push"

        elif self.state == "push":
            if not self.hand.busy():
                back = self.hand.pos + self.plan.normal * (self.standoff + self.plan.advance)
                self.hand.speed = 0.20
                self.hand.waypoints = [back]
                self.state = "retreat"

        elif self.state == "retreat":
            if not self.hand.busy():
                if self.rng.random() < 0.25:
                    self.hand.pause_until = t + float(self.rng.uniform(0.2, 0.6))
                self.state = "choose"

        done = self.state == "finish" and t >= self.done_at
        return self._emit(t, dt), done

    def _start_approach(self, world: World):
        start = self.plan.start + np.clip(self.rng.normal(0.0, 0.005, 2), -0.01, 0.01)
        self.hand.speed = float(self.rng.uniform(0.16, 0.2))
        self.hand.waypoints = self._route(world, self.hand.pos, start)
        self.state = "approach"

    def _route(self, world: World, frm: np.ndarray, to: np.ndarray) -> list:
        """Straight line, or an arc around the box when the line crosses it."""
        clearance = world.effectors[0].radius + 0.01
        if _segment_clear(world, frm, to, clearance):
            return [to.copy()]
        centroid = world.box_world().centroid
        radius = world.box_shape.bounding_radius + world.effectors[0].radius + 0.05
        a0 = math.atan2(*(frm - centroid)[::-1])
        a1 = math.atan2(*(to - centroid)[::-1])
        delta = wrap_angle(a1 - a0)
        steps = max(1, int(abs(delta) / 0.6))
        pts = []
        for k in range(1, steps + 1):
            ang = a0 + delta * (k / steps)
            pts.append(centroid + radius * np.array([math.cos(ang), math.sin(ang)]))
        pts.append(to.copy())
        return pts

    def _emit(self, t: float, dt: float):
        hand_pos = self.hand.tick(t, dt)
        support_pos = self.support.tick(t, dt)
        return [
            (Pose2(hand_pos), self.gammas[0]),
            (Pose2(support_pos), self.gammas[1]),
        ]
