"""Live service: runs the simulator and executor, speaks the wire protocol.

One thread owns the 100 Hz sim stepping; websocket handlers exchange
validated command values and immutable snapshots with it under a lock.
Policy inference (autonomous and shared modes) runs on the executor's
worker thread and never blocks the control loop.
"""

from __future__ import annotations

import json
import math
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from .dataset import Recorder, load_dataset, save_dataset
from .encoding import EncodingLayout
from .executor import Executor
from .generative import FlowModel, sample_actions
from .geom import Pose2, wrap_angle
from .protocol import (
    AckMsg,
    ContactToggleMsg,
    EpisodeMsg,
    ErrorMsg,
    HelloMsg,
    MarkerState,
    ModeMsg,
    RecordMsg,
    ShapeState,
    StateMsg,
    TeleopMsg,
    parse_client_message,
)
from .runner import view_world
from .tasks import (
    PushTaskConfig,
    ReachTaskConfig,
    push_error,
    spawn_push_episode,
    spawn_reach_episode,
)
from .world import request_contact_switch, step

TELEOP_HOLD = 0.2  # s without input before velocity decays
TELEOP_DECAY = 0.2  # s to decay to zero after the hold expires


@dataclass
class _TeleopChannel:
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    wz: float = 0.0
    last_input: float = -1e9

    def effective(self, now: float):
        age = now - self.last_input
        if age <= TELEOP_HOLD:
            scale = 1.0
        elif age >= TELEOP_HOLD + TELEOP_DECAY:
            scale = 0.0
        else:
            scale = 1.0 - (age - TELEOP_HOLD) / TELEOP_DECAY
        return self.velocity * scale, self.wz * scale


class SimService:
    """Owns the world; all public methods are thread-safe."""

    def __init__(
        self,
        task: str = "push-t",
        seed: int = 0,
        checkpoint: str | None = None,
        mode: str = "teleoperation",
        dataset_path: str | None = None,
        method: str | None = None,
        sample_steps: int = 20,
        owned_effector: int | None = None,
        async_inference: bool = True,
    ):
        self.lock = threading.RLock()
        self.model = FlowModel.load(checkpoint) if checkpoint else None
        if mode in ("autonomous", "shared") and self.model is None:
            raise FileNotFoundError(
                "a checkpoint is required for autonomous and shared modes"
            )
        self.method = method
        self.sample_steps = sample_steps
        self.dataset_path = Path(dataset_path) if dataset_path else None
        self.demos = list(load_dataset(self.dataset_path)) if (
            self.dataset_path and self.dataset_path.exists()
        ) else []
        self.async_inference = async_inference
        self.mode = mode
        self.owned_effector = owned_effector if mode == "shared" else None
        self.recording = False
        self.recorder = None
        self._thread = None
        self._running = False
        self.tick_gaps = deque(maxlen=120_000)
        self._episode_count = len(self.demos)
        self._reset_episode(task, seed)

    # -- episode / mode management ------------------------------------------

    def _reset_episode(self, task: str, seed: int):
        rng = np.random.default_rng(seed)
        if task == "reach":
            self.task_cfg = ReachTaskConfig()
            self.world = spawn_reach_episode(rng, "in", self.task_cfg)
        elif task in ("push-t", "push-u"):
            self.task_cfg = PushTaskConfig()
            self.world = spawn_push_episode(rng, task.split("-")[1], self.task_cfg)
        else:
            raise ValueError(f"unknown task {task!r}")
        self.task = task
        self.seed = seed
        n_eff = len(self.world.effectors)
        self.teleop = [_TeleopChannel() for _ in range(n_eff)]
        self.teleop_poses = [e.pose.copy() for e in self.world.effectors]
        self.recording = False
        self.recorder = None
        self.executor = None
        if self.mode in ("autonomous", "shared"):
            owned = (self.owned_effector,) if self.mode == "shared" else ()
            rng_s = np.random.default_rng(seed + 777_000)
            sampler = lambda st: sample_actions(
                self.model, st, rng_s, method=self.method, steps=self.sample_steps
            )
            self.executor = Executor(
                sampler,
                EncodingLayout(n_effectors=n_eff, n_markers=1),
                latency=0.0 if self.async_inference else 0.8,
                owned=owned,
                operator_fn=lambda idx, t: (self.teleop_poses[idx].copy(), float(
                    self.world.effectors[idx].contact_cmd
                )),
                async_mode=self.async_inference,
            )

    # -- message handling -----------------------------------------------------

    def handle_raw(self, raw: str):
        try:
            msg = parse_client_message(raw)
        except ValidationError as e:
            return ErrorMsg(message=f"invalid message: {e.errors()[0]['msg']}"
                            + f" at {e.errors()[0]['loc']}")
        return self.handle(msg)

    def handle(self, msg):
        with self.lock:
            if isinstance(msg, TeleopMsg):
                return self._handle_teleop(msg)
            if isinstance(msg, ModeMsg):
                return self._handle_mode(msg)
            if isinstance(msg, RecordMsg):
                return self._handle_record(msg)
            if isinstance(msg, EpisodeMsg):
                self._reset_episode(
                    "reach" if msg.task == "reach" else msg.task, msg.seed
                )
                return AckMsg(of="episode", detail=f"{msg.task} seed {msg.seed}")
            if isinstance(msg, ContactToggleMsg):
                return self._handle_toggle(msg)
            return ErrorMsg(message=f"unhandled message type {type(msg).__name__}")

    def _handle_teleop(self, msg: TeleopMsg):
        if msg.effector >= len(self.world.effectors):
            return ErrorMsg(message=f"no effector {msg.effector}")
        if self.mode == "autonomous":
            return ErrorMsg(message="teleop input ignored in autonomous mode")
        if self.mode == "shared" and msg.effector != self.owned_effector:
            return ErrorMsg(
                message=f"effector {msg.effector} is policy-controlled in shared mode"
            )
        ch = self.teleop[msg.effector]
        limit = self.world.config.velocity_limit
        ch.velocity = np.clip([msg.vx, msg.vy], -limit, limit)
        wlimit = self.world.config.angular_velocity_limit
        ch.wz = max(-wlimit, min(wlimit, msg.wz))
        ch.last_input = self.world.clock
        return None  # validated; no ack at teleop rates

    def _handle_mode(self, msg: ModeMsg):
        if self.recording:
            return ErrorMsg(message="mode change rejected while recording an episode")
        if msg.mode in ("autonomous", "shared") and self.model is None:
            return ErrorMsg(message="no checkpoint loaded; policy modes unavailable")
        if msg.mode == "shared" and msg.owned_effector is None:
            return ErrorMsg(message="shared mode needs owned_effector")
        self.mode = {"teleoperation": "teleoperation", "autonomous": "autonomous",
                     "shared": "shared"}[msg.mode]
        self.owned_effector = msg.owned_effector if msg.mode == "shared" else None
        self._reset_episode(self.task, self.seed)
        return AckMsg(of="mode", detail=self.mode)

    def _handle_record(self, msg: RecordMsg):
        if msg.action == "start":
            if self.recording:
                return ErrorMsg(message="already recording")
            self.recorder = Recorder(n_effectors=len(self.world.effectors))
            self.recording = True
            return AckMsg(of="record", detail="start")
        if msg.action == "discard":
            self.recording = False
            self.recorder = None
            return AckMsg(of="record", detail="discard")
        if not self.recording:
            return ErrorMsg(message="not recording")
        self.recording = False
        demo = self.recorder.build(
            episode_id=f"human-{self.task}-{self._episode_count}",
            source="human",
            task=self.task,
            seed=self.seed,
            config={**self.task_cfg.to_dict(), "dist": "in"},
            final_state={},
        )
        self.recorder = None
        self._episode_count += 1
        self.demos.append(demo)
        if self.dataset_path:
            save_dataset(self.demos, self.dataset_path)
        return AckMsg(of="record", detail=f"saved {demo.episode_id}")

    def _handle_toggle(self, msg: ContactToggleMsg):
        idx = msg.effector
        if idx >= len(self.world.effectors):
            return ErrorMsg(message=f"no effector {idx}")
        if self.mode == "autonomous":
            return ErrorMsg(message="contact toggles ignored in autonomous mode")
        if self.mode == "shared" and idx != self.owned_effector:
            return ErrorMsg(message="that effector's contacts are policy-controlled")
        eff = self.world.effectors[idx]
        desired = eff.contact_cmd == 0
        result = request_contact_switch(self.world, idx, desired)
        if result != "accepted":
            return ErrorMsg(message=f"contact switch rejected: {result}")
        return AckMsg(of="contact_toggle", detail=f"effector {idx} -> {int(desired)}")

    # -- stepping -------------------------------------------------------------

    def step_once(self):
        with self.lock:
            world = self.world
            dt = world.config.dt
            t = world.clock
            self._integrate_teleop(t, dt)
            if self.executor is not None:
                view = view_world(world)
                switch_fn = (
                    lambda i, desired: request_contact_switch(world, i, desired)
                    == "accepted"
                )
                result = self.executor.tick(t, view, dt, switch_fn=switch_fn)
                cmds = result.commands
            else:
                cmds = [
                    (self.teleop_poses[i].copy(), float(world.effectors[i].contact_cmd))
                    for i in range(len(world.effectors))
                ]
            if self.recording:
                self.recorder.add(
                    t,
                    [p for p, _ in cmds],
                    [g for _, g in cmds],
                    [e.contact_cmd for e in world.effectors],
                    [e.tau(t, world.config.tau_max) for e in world.effectors],
                    world.marker.pose,
                    world.marker.age,
                )
            step(world, [p for p, _ in cmds], dt)

    def _integrate_teleop(self, t, dt):
        if self.mode == "autonomous":
            return
        for i, ch in enumerate(self.teleop):
            if self.mode == "shared" and i != self.owned_effector:
                continue
            if self.world.effectors[i].transitioning or self.world.effectors[i].enabled:
                continue
            v, wz = ch.effective(t)
            pose = self.teleop_poses[i]
            pose.position = pose.position + v * dt
            pose.heading = wrap_angle(pose.heading + wz * dt)

    # -- snapshots --------------------------------------------------------------

    def snapshot(self) -> StateMsg:
        with self.lock:
            world = self.world
            shape_w = world.box_world()
            target_w = world.box_shape.transformed(world.target)
            effs = []
            for e in world.effectors:
                effs.append(
                    {
                        "x": float(e.pose.position[0]),
                        "y": float(e.pose.position[1]),
                        "heading": float(e.pose.heading),
                        "radius": e.radius,
                        "mode": e.mode,
                        "transition_remaining": max(0.0, e.transition_end - world.clock)
                        if e.transitioning
                        else 0.0,
                        "contact_cmd": e.contact_cmd,
                        "tau": float(e.tau(world.clock, world.config.tau_max)),
                    }
                )
            ghost = None
            if self.executor is not None and self.executor.stream is not None:
                seg = self.executor.stream
                idx = np.linspace(0, len(seg.data) - 1, 24).astype(int)
                ghost = [
                    [[float(seg.data[j, i, 0]), float(seg.data[j, i, 1])] for j in idx]
                    for i in range(seg.data.shape[1])
                ]
            return StateMsg(
                t=world.clock,
                mode=self.mode,
                owned_effector=self.owned_effector,
                recording=self.recording,
                task=self.task,
                box=ShapeState(parts=[p.tolist() for p in shape_w.parts]),
                box_pose=[
                    float(world.box_pose.position[0]),
                    float(world.box_pose.position[1]),
                    float(world.box_pose.heading),
                ],
                target=ShapeState(parts=[p.tolist() for p in target_w.parts]),
                effectors=effs,
                supports=[
                    [float(s.center[0]), float(s.center[1]), s.radius]
                    for s in world.supports
                ],
                marker=MarkerState(
                    x=float(world.marker.pose.position[0]),
                    y=float(world.marker.pose.position[1]),
                    heading=float(world.marker.pose.heading),
                    age=float(world.marker.age),
                ),
                push_error=push_error(world) if self.task.startswith("push") else 0.0,
                reach_free=world.config.r_free,
                reach_supported=world.config.r_supported,
                base=[float(world.base[0]), float(world.base[1])],
                episode_clock=world.clock,
            )

    def snapshot_json(self) -> str:
        return self.snapshot().model_dump_json()

    # -- real-time loop ---------------------------------------------------------

    def start(self):
        if self._running:
            return
        self._running = True
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self):
        self._running = False
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def _loop(self):
        dt = self.world.config.dt
        next_t = time.perf_counter()
        last_start = None
        while self._running:
            start = time.perf_counter()
            if last_start is not None:
                self.tick_gaps.append(start - last_start)
            last_start = start
            self.step_once()
            next_t += dt
            delay = next_t - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            else:
                next_t = time.perf_counter()  # fell behind; resynchronize

    def max_tick_gap(self) -> float:
        return max(self.tick_gaps) if self.tick_gaps else 0.0


def create_app(service: SimService, frontend_dir: str | None = None):
    import asyncio

    from fastapi import FastAPI, WebSocket, WebSocketDisconnect

    app = FastAPI(title="multisupport bridge")
    app.state.service = service

    snapshot_period = 0.05  # 20 Hz downstream state

    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        await websocket.send_text(
            HelloMsg(
                n_effectors=len(service.world.effectors),
                task=service.task,
                mode=service.mode,
            ).model_dump_json()
        )
        loop = asyncio.get_event_loop()
        next_snapshot = loop.time()
        try:
            while True:
                now = loop.time()
                if now >= next_snapshot:
                    await websocket.send_text(service.snapshot_json())
                    next_snapshot = now + snapshot_period
                try:
                    raw = await asyncio.wait_for(
                        websocket.receive_text(),
                        timeout=max(0.0, next_snapshot - loop.time()),
                    )
                except asyncio.TimeoutError:
                    continue
                reply = service.handle_raw(raw)
                if reply is not None:
                    await websocket.send_text(reply.model_dump_json())
        except WebSocketDisconnect:
            pass

    # Plain starlette routing: FastAPI's websocket dependency solver is not
    # exercised for this endpoint, and this build's fastapi/starlette pair
    # mishandles it anyway.
    from starlette.routing import WebSocketRoute

    app.router.routes.append(WebSocketRoute("/ws", ws_endpoint))

    if frontend_dir and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="cockpit")
    return app
