"""Receding-horizon execution: periodic inference, trajectory stitching, and
contact-switch emission over a continuous 100 Hz command stream.

The control loop owner calls tick() every control period and must never be
blocked: inference results are either computed at launch and applied after a
fixed simulated latency (deterministic mode) or computed on a worker thread
with a single-slot, newest-wins handoff (wall-clock mode).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .contact import ContactAutomaton, hysteresis_update
from .encoding import (
    EffectorSnapshot,
    EncodingLayout,
    MarkerSnapshot,
    encode_state,
    decode_actions,
)
from .geom import Pose2, wrap_angle
from .stream import (
    CommandSegment,
    StitchCoverageError,
    resample_linear,
    stitch,
    zero_phase_filter,
)


class InferenceOverrunError(RuntimeError):
    pass


@dataclass
class EffectorView:
    pose: Pose2  # measured pose (used only to seed commands at start)
    transitioning: bool
    contact_cmd: int
    tau: float


@dataclass
class WorldView:
    effectors: list
    marker_pose: Pose2
    marker_age: float


@dataclass
class TickResult:
    commands: list  # per effector (Pose2, gamma)
    switch_events: list = field(default_factory=list)  # (idx, kind, accepted)
    inference_started: bool = False
    inference_applied: bool = False


class Executor:
    """Streams commands from periodically re-inferred action trajectories.

    sampler: state vector -> (N, D) relative actions in raw units.
    latency: seconds between launching an inference and applying its result
    (deterministic simulated latency; in async mode the wall clock decides).
    owned: effector indices whose commands come from operator_fn(idx, t) ->
    (Pose2, gamma) instead of the policy (shared autonomy).
    """

    def __init__(
        self,
        sampler,
        layout: EncodingLayout,
        period: float = 4.0,
        blend: float = 0.5,
        rate: float = 100.0,
        action_rate: float = 5.0,
        horizon: int = 32,
        latency: float = 0.0,
        filter_alpha: float = 0.7,
        tau_max: float = 20.0,
        owned: tuple = (),
        operator_fn=None,
        async_mode: bool = False,
        velocity_limit: float = 0.25,
        angular_velocity_limit: float = 2.0,
    ):
        horizon_s = (horizon - 1) / action_rate
        if latency > horizon_s - blend - period:
            raise InferenceOverrunError(
                f"latency {latency:.2f}s exceeds slack "
                f"{horizon_s - blend - period:.2f}s (horizon {horizon_s:.2f}s, "
                f"blend {blend}s, period {period}s)"
            )
        self.sampler = sampler
        self.layout = layout
        self.period = period
        self.blend = blend
        self.rate = rate
        self.action_rate = action_rate
        self.horizon = horizon
        self.latency = latency
        self.filter_alpha = filter_alpha
        self.tau_max = tau_max
        self.owned = set(owned)
        self.operator_fn = operator_fn
        self.async_mode = async_mode

        self.velocity_limit = velocity_limit
        self.angular_velocity_limit = angular_velocity_limit
        self.automatons = None
        self.stream: CommandSegment | None = None
        self.next_inference_t = None
        self.pending = None  # (apply_time, CommandSegment) in deterministic mode
        self.frozen_poses = {}
        self.overruns = 0
        self._last_emitted = None
        self._worker = None
        self._worker_lock = threading.Lock()
        self._worker_result = None  # (launch_t, segment)

    # -- helpers ------------------------------------------------------------

    def _init_from(self, view: WorldView):
        self.automatons = [
            ContactAutomaton(contact=e.contact_cmd, tau=min(e.tau, self.tau_max),
                             tau_max=self.tau_max)
            for e in view.effectors
        ]

    def current_commands(self, t: float, view: WorldView) -> list:
        """Latest commands sent: stream values, operator values for owned
        effectors, or measured poses before streaming starts."""
        if self.stream is None:
            cmds = [(e.pose.copy(), 0.0) for e in view.effectors]
        else:
            row = self.stream.sample(t)
            cmds = [
                (Pose2(row[i, :2].copy(), row[i, 2]), float(row[i, 3]))
                for i in range(len(view.effectors))
            ]
        for i in self.owned:
            if self.operator_fn is not None:
                cmds[i] = self.operator_fn(i, t)
        return cmds

    def _encode(self, t: float, view: WorldView, cmds: list) -> np.ndarray:
        effs = [
            EffectorSnapshot(pose=cmds[i][0], contact=view.effectors[i].contact_cmd,
                             tau=view.effectors[i].tau)
            for i in range(len(view.effectors))
        ]
        markers = [MarkerSnapshot(view.marker_pose, view.marker_age)]
        return encode_state(effs, markers, self.layout, self.tau_max)

    def _infer_segment(self, t: float, state: np.ndarray, anchor_poses: list) -> CommandSegment:
        rel = np.asarray(self.sampler(state))
        steps = decode_actions(rel, anchor_poses, self.layout)
        n_eff = self.layout.n_effectors
        data5 = np.empty((len(steps), n_eff, 4))
        for s, row in enumerate(steps):
            for i, (pose, gamma) in enumerate(row):
                data5[s, i] = (pose.position[0], pose.position[1], pose.heading, gamma)
        data5[:, :, 2] = np.unwrap(data5[:, :, 2], axis=0)
        seg = resample_linear(data5, t, self.action_rate, self.rate)
        seg.data = zero_phase_filter(seg.data.reshape(len(seg.data), -1),
                                     self.filter_alpha).reshape(seg.data.shape)
        return seg

    def _apply(self, t: float, seg: CommandSegment):
        if self.stream is None:
            self.stream = seg
        else:
            try:
                self.stream = stitch(self.stream, seg, t_now=t, blend=self.blend)
            except StitchCoverageError as e:
                raise InferenceOverrunError(str(e)) from None

    # -- main loop ----------------------------------------------------------

    def tick(self, t: float, view: WorldView, dt: float, switch_fn=None) -> TickResult:
        if self.automatons is None:
            self._init_from(view)
            self.next_inference_t = t
        result = TickResult(commands=[])

        # Deliver a finished inference (deterministic or worker mode).
        if self.pending is not None and t >= self.pending[0] - 1e-9:
            self._apply(t, self.pending[1])
            self.pending = None
            result.inference_applied = True
        if self.async_mode:
            with self._worker_lock:
                done = self._worker_result
                self._worker_result = None
            if done is not None:
                self._apply(t, done)
                result.inference_applied = True

        # Launch a new inference from the latest commands and marker state.
        if t >= self.next_inference_t - 1e-9:
            cmds_now = self.current_commands(t, view)
            state = self._encode(t, view, cmds_now)
            anchors = [c[0] for c in cmds_now]
            if self.stream is not None:
                slack = self.stream.t_end - (t + self.latency + self.blend)
                if slack < -1e-9:
                    raise InferenceOverrunError(
                        f"stream ends at {self.stream.t_end:.2f}s, inference "
                        f"launched at {t:.2f}s cannot be applied in time"
                    )
            if self.async_mode and self.stream is not None:
                self._launch_async(t, state, anchors)
            else:
                seg = self._infer_segment(t, state, anchors)
                if self.stream is None:
                    self._apply(t, seg)  # priming: before streaming starts
                    result.inference_applied = True
                else:
                    self.pending = (t + self.latency, seg)
            self.next_inference_t += self.period
            result.inference_started = True

        cmds = self.current_commands(t, view)

        # Freeze pose commands while a contact transition is in progress.
        for i, eff in enumerate(view.effectors):
            if eff.transitioning:
                if i not in self.frozen_poses:
                    self.frozen_poses[i] = cmds[i][0].copy()
                cmds[i] = (self.frozen_poses[i].copy(), cmds[i][1])
            else:
                self.frozen_poses.pop(i, None)

        # The emitted stream honors the per-tick velocity bound regardless of
        # what the model sampled; the operator's slots pass through exactly.
        if self._last_emitted is not None:
            step_max = self.velocity_limit * dt
            dh_max = self.angular_velocity_limit * dt
            for i in range(len(cmds)):
                if i in self.owned:
                    continue
                prev_pose = self._last_emitted[i]
                pose, gamma = cmds[i]
                delta = pose.position - prev_pose.position
                dn = float(np.linalg.norm(delta))
                if dn > step_max:
                    pose = Pose2(prev_pose.position + delta * (step_max / dn), pose.heading)
                dh = wrap_angle(pose.heading - prev_pose.heading)
                if abs(dh) > dh_max:
                    pose = Pose2(pose.position, prev_pose.heading + np.sign(dh) * dh_max)
                cmds[i] = (pose, gamma)
        self._last_emitted = [p.copy() for p, _ in cmds]

        # Contact hysteresis on policy-driven effectors.
        for i, aut in enumerate(self.automatons):
            if i in self.owned:
                continue
            gamma = cmds[i][1]
            updated, event = hysteresis_update(aut, gamma, dt)
            if event is not None:
                accepted = switch_fn(i, event == "enable") if switch_fn else True
                if not accepted:
                    updated = aut.with_tau(aut.tau + dt)
                result.switch_events.append((i, event, accepted))
            self.automatons[i] = updated

        if self.stream is not None and len(self.stream.data) > 4 * self.rate:
            self.stream = self.stream.trimmed(t - 0.5)

        result.commands = cmds
        return result

    def _launch_async(self, t: float, state: np.ndarray, anchors: list):
        if self._worker is not None and self._worker.is_alive():
            self.overruns += 1  # previous inference still running; skip cycle
            return

        def job():
            seg = self._infer_segment(t, state, anchors)
            with self._worker_lock:
                self._worker_result = seg

        self._worker = threading.Thread(target=job, daemon=True)
        self._worker.start()
