"""Wire protocol for the cockpit: text-encoded messages with a `type` field.

Upstream (client -> service): teleop, mode, record, episode, contact_toggle.
Downstream (service -> client): state at 20 Hz, ack/error frames.
Unknown fields are rejected; the protocol version rides on every state
frame and on the hello frame.
"""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter

PROTOCOL_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TeleopMsg(_Strict):
    type: Literal["teleop"]
    effector: int = Field(ge=0)
    vx: float = 0.0
    vy: float = 0.0
    wz: float = 0.0
    timestamp: float = 0.0


class ModeMsg(_Strict):
    type: Literal["mode"]
    mode: Literal["teleoperation", "autonomous", "shared"]
    owned_effector: Optional[int] = None  # required for shared


class RecordMsg(_Strict):
    type: Literal["record"]
    action: Literal["start", "stop", "discard"]


class EpisodeMsg(_Strict):
    type: Literal["episode"]
    action: Literal["reset"]
    task: Literal["reach", "push-t", "push-u"] = "push-t"
    seed: int = 0


class ContactToggleMsg(_Strict):
    type: Literal["contact_toggle"]
    effector: int = Field(ge=0)


ClientMessage = Union[TeleopMsg, ModeMsg, RecordMsg, EpisodeMsg, ContactToggleMsg]
_client_adapter = TypeAdapter(ClientMessage)


def parse_client_message(raw: str) -> ClientMessage:
    return _client_adapter.validate_json(raw)


class EffectorState(_Strict):
    x: float
    y: float
    heading: float
    radius: float
    mode: Literal["disabled", "enabling", "enabled", "disabling"]
    transition_remaining: float
    contact_cmd: int
    tau: float


class MarkerState(_Strict):
    x: float
    y: float
    heading: float
    age: float


class ShapeState(_Strict):
    parts: list  # list of [[x, y], ...] rings in world frame


class StateMsg(_Strict):
    type: Literal["state"] = "state"
    version: int = PROTOCOL_VERSION
    t: float
    mode: str
    owned_effector: Optional[int] = None
    recording: bool
    task: str
    box: ShapeState
    box_pose: list  # [x, y, heading]
    target: ShapeState
    effectors: list  # list[EffectorState dicts]
    supports: list  # [[cx, cy, r], ...]
    marker: MarkerState
    push_error: float
    reach_free: float
    reach_supported: float
    base: list
    episode_clock: float
    ghost: Optional[list] = None  # predicted horizon polyline per effector


class AckMsg(_Strict):
    type: Literal["ack"] = "ack"
    of: str
    detail: str = ""


class ErrorMsg(_Strict):
    type: Literal["error"] = "error"
    message: str


class HelloMsg(_Strict):
    type: Literal["hello"] = "hello"
    version: int = PROTOCOL_VERSION
    n_effectors: int
    task: str
    mode: str


ServerMessage = Union[StateMsg, AckMsg, ErrorMsg, HelloMsg]
_server_adapter = TypeAdapter(ServerMessage)


def parse_server_message(raw: str) -> ServerMessage:
    return _server_adapter.validate_json(raw)
