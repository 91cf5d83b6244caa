"""State/action encoding between world observations and model vectors.

State layout (fixed order): per effector [x, y, cos h, sin h, contact,
clamped switch age], then per marker [x, y, cos h, sin h, clamped age].
Action layout: per trajectory step, per effector [dx, dy, dheading, gamma]
with poses expressed in the frame of the current effector pose command, so
every encoded trajectory starts at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import Pose2, wrap_angle

TAU_MAX = 20.0  # seconds; elapsed-time inputs saturate here

EFFECTOR_FIELDS = 6
MARKER_FIELDS = 5
ACTION_FIELDS = 4


class MissingMarkerError(ValueError):
    """A marker has never been observed; callers must seed episode-start poses."""


@dataclass
class EffectorSnapshot:
    pose: Pose2  # current pose command
    contact: int  # commanded discrete contact state
    tau: float  # seconds since last contact switch


@dataclass
class MarkerSnapshot:
    pose: Pose2  # latest detected pose
    age: float  # seconds since last refresh


@dataclass(frozen=True)
class EncodingLayout:
    n_effectors: int
    n_markers: int

    @property
    def state_dim(self) -> int:
        return EFFECTOR_FIELDS * self.n_effectors + MARKER_FIELDS * self.n_markers

    @property
    def action_dim(self) -> int:
        return ACTION_FIELDS * self.n_effectors

    def marker_tau_indices(self) -> list:
        base = EFFECTOR_FIELDS * self.n_effectors
        return [base + MARKER_FIELDS * j + 4 for j in range(self.n_markers)]

    def gamma_indices(self) -> list:
        return [ACTION_FIELDS * i + 3 for i in range(self.n_effectors)]


def clamp_tau(tau: float, tau_max: float = TAU_MAX) -> float:
    return min(float(tau), tau_max)


def encode_state(
    effectors: list,
    markers: list,
    layout: EncodingLayout,
    tau_max: float = TAU_MAX,
) -> np.ndarray:
    """Build the flat policy state vector from snapshots."""
    if len(effectors) != layout.n_effectors or len(markers) != layout.n_markers:
        raise ValueError(
            f"snapshot counts ({len(effectors)} eff, {len(markers)} mk) do not "
            f"match layout ({layout.n_effectors}, {layout.n_markers})"
        )
    out = np.empty(layout.state_dim)
    k = 0
    for eff in effectors:
        h = eff.pose.heading
        out[k : k + EFFECTOR_FIELDS] = (
            eff.pose.position[0],
            eff.pose.position[1],
            math.cos(h),
            math.sin(h),
            float(eff.contact),
            clamp_tau(eff.tau, tau_max),
        )
        k += EFFECTOR_FIELDS
    for mk in markers:
        if mk is None or mk.pose is None:
            raise MissingMarkerError("marker has no observation yet")
        h = mk.pose.heading
        out[k : k + MARKER_FIELDS] = (
            mk.pose.position[0],
            mk.pose.position[1],
            math.cos(h),
            math.sin(h),
            clamp_tau(mk.age, tau_max),
        )
        k += MARKER_FIELDS
    return out


def encode_actions(abs_cmds: list, current: list, layout: EncodingLayout) -> np.ndarray:
    """Encode absolute 5 Hz pose commands relative to the current commands.

    abs_cmds: list over N steps; each step is a list per effector of
    (Pose2, gamma). current: list of Pose2 per effector. Returns (N, D).
    """
    n = len(abs_cmds)
    out = np.empty((n, layout.action_dim))
    for step, row in enumerate(abs_cmds):
        if len(row) != layout.n_effectors:
            raise ValueError(
                f"step {step} has {len(row)} effector commands, expected {layout.n_effectors}"
            )
        for i, (pose, gamma) in enumerate(row):
            rel = pose.relative_to(current[i])
            base = ACTION_FIELDS * i
            out[step, base] = rel.position[0]
            out[step, base + 1] = rel.position[1]
            out[step, base + 2] = rel.heading
            out[step, base + 3] = gamma
    return out


def decode_actions(rel: np.ndarray, current: list, layout: EncodingLayout) -> list:
    """Inverse of encode_actions: (N, D) -> per-step [(Pose2, gamma), ...]."""
    rel = np.asarray(rel)
    if rel.ndim != 2 or rel.shape[1] != layout.action_dim:
        raise ValueError(f"action matrix shape {rel.shape} does not match layout dim {layout.action_dim}")
    steps = []
    for row in rel:
        cmds = []
        for i in range(layout.n_effectors):
            base = ACTION_FIELDS * i
            local = Pose2(row[base : base + 2], row[base + 2])
            cmds.append((current[i].compose(local), float(row[base + 3])))
        steps.append(cmds)
    return steps


def augment_marker_times(
    states: np.ndarray,
    layout: EncodingLayout,
    rng: np.random.Generator,
    p: float = 0.3,
    lo: float = 0.0,
    hi: float = TAU_MAX,
) -> np.ndarray:
    """Randomize marker ages on a fraction p of samples; other fields untouched."""
    out = states.copy()
    if p <= 0.0 or layout.n_markers == 0:
        return out
    picked = rng.random(len(out)) < p
    for idx in layout.marker_tau_indices():
        draws = rng.uniform(lo, hi, size=len(out))
        out[picked, idx] = draws[picked]
    return out
