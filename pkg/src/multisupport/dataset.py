"""Demonstration recording, persistence, normalization, and window assembly.

On-disk format: a line-delimited JSON manifest (one record per line with
explicit field names) paired with a binary side-file holding the bulk
numeric payloads as little-endian arrays. The manifest's first line is a
versioned header; every array reference carries its byte offset, dtype and
shape, so truncation is detected with the exact offset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoding import (
    ACTION_FIELDS,
    EFFECTOR_FIELDS,
    MARKER_FIELDS,
    EncodingLayout,
    EffectorSnapshot,
    MarkerSnapshot,
    encode_actions,
    encode_state,
)
from .geom import Pose2

DATASET_VERSION = 1
RECORD_RATE = 100.0
ACTION_RATE = 5.0
SUBSAMPLE = int(RECORD_RATE / ACTION_RATE)
HORIZON = 32


class DatasetVersionError(ValueError):
    pass


class CorruptRecordError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


@dataclass
class Demonstration:
    episode_id: str
    source: str  # "human" | "scripted"
    task: str  # "reach" | "push-t" | "push-u"
    seed: int
    t: np.ndarray  # (T,) strictly increasing timestamps
    cmds: np.ndarray  # (T, E, 4) commanded x, y, heading, gamma
    contact: np.ndarray  # (T, E) discrete contact command c
    tau: np.ndarray  # (T, E) time since last switch (unclamped)
    marker_pose: np.ndarray  # (T, 3) x, y, heading
    marker_age: np.ndarray  # (T,)
    events: list = field(default_factory=list)  # (t, effector, kind, result)
    config: dict = field(default_factory=dict)  # world + task config snapshot
    final_state: dict = field(default_factory=dict)  # replay verification data

    @property
    def n_effectors(self) -> int:
        return self.cmds.shape[1]

    def validate(self):
        if len(self.t) >= 2 and not np.all(np.diff(self.t) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if not self.config:
            raise ValueError("config snapshot missing")


@dataclass
class Recorder:
    n_effectors: int
    rows_t: list = field(default_factory=list)
    rows_cmd: list = field(default_factory=list)
    rows_contact: list = field(default_factory=list)
    rows_tau: list = field(default_factory=list)
    rows_marker: list = field(default_factory=list)
    rows_age: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def add(self, t, cmds, gammas, contacts, taus, marker_pose, marker_age):
        self.rows_t.append(t)
        self.rows_cmd.append(
            [
                (p.position[0], p.position[1], p.heading, g)
                for p, g in zip(cmds, gammas)
            ]
        )
        self.rows_contact.append(list(contacts))
        self.rows_tau.append(list(taus))
        self.rows_marker.append(
            (marker_pose.position[0], marker_pose.position[1], marker_pose.heading)
        )
        self.rows_age.append(marker_age)

    def add_event(self, t, effector, kind, result):
        self.events.append((float(t), int(effector), str(kind), str(result)))

    def build(self, episode_id, source, task, seed, config, final_state) -> Demonstration:
        demo = Demonstration(
            episode_id=episode_id,
            source=source,
            task=task,
            seed=seed,
            t=np.asarray(self.rows_t, dtype=np.float64),
            cmds=np.asarray(self.rows_cmd, dtype=np.float64),
            contact=np.asarray(self.rows_contact, dtype=np.int8),
            tau=np.asarray(self.rows_tau, dtype=np.float64),
            marker_pose=np.asarray(self.rows_marker, dtype=np.float64),
            marker_age=np.asarray(self.rows_age, dtype=np.float64),
            events=self.events,
            config=config,
            final_state=final_state,
        )
        demo.validate()
        return demo


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_ARRAY_FIELDS = ("t", "cmds", "contact", "tau", "marker_pose", "marker_age")


def save_dataset(demos: list, path) -> Path:
    """Write the manifest (.jsonl lines) and binary payload side-file."""
    path = Path(path)
    bin_path = path.with_suffix(path.suffix + ".bin")
    offset = 0
    lines = [
        json.dumps(
            {
                "type": "header",
                "format_version": DATASET_VERSION,
                "payload_file": bin_path.name,
                "episodes": len(demos),
            }
        )
    ]
    with open(bin_path, "wb") as payload:
        for demo in demos:
            demo.validate()
            arrays = {}
            for name in _ARRAY_FIELDS:
                arr = np.ascontiguousarray(getattr(demo, name))
                arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
                payload.write(arr.tobytes())
                arrays[name] = {
                    "offset": offset,
                    "dtype": str(arr.dtype),
                    "shape": list(arr.shape),
                }
                offset += arr.nbytes
            lines.append(
                json.dumps(
                    {
                        "type": "episode",
                        "id": demo.episode_id,
                        "source": demo.source,
                        "task": demo.task,
                        "seed": demo.seed,
                        "config": demo.config,
                        "events": demo.events,
                        "final_state": demo.final_state,
                        "arrays": arrays,
                    }
                )
            )
    path.write_text("\n".join(lines) + "\n")
    return path


def load_dataset(path) -> list:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise CorruptRecordError("record 0: empty manifest")
    header = _parse_line(lines[0], 0)
    if header.get("type") != "header":
        raise CorruptRecordError("record 0: missing header record")
    if header.get("format_version") != DATASET_VERSION:
        raise DatasetVersionError(
            f"dataset format version {header.get('format_version')} != {DATASET_VERSION}"
        )
    blob = (path.parent / header["payload_file"]).read_bytes()
    demos = []
    for i, line in enumerate(lines[1:], start=1):
        if not line.strip():
            continue
        rec = _parse_line(line, i)
        if rec.get("type") != "episode":
            raise CorruptRecordError(f"record {i}: unexpected type {rec.get('type')!r}")
        kwargs = {}
        for name in _ARRAY_FIELDS:
            spec = rec["arrays"][name]
            dtype = np.dtype(spec["dtype"])
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            start, end = spec["offset"], spec["offset"] + count * dtype.itemsize
            if end > len(blob):
                raise CorruptRecordError(
                    f"record {i}: payload truncated at byte {len(blob)} "
                    f"(array {name} needs bytes {start}..{end})"
                )
            kwargs[name] = np.frombuffer(blob[start:end], dtype=dtype).reshape(spec["shape"]).copy()
        demos.append(
            Demonstration(
                episode_id=rec["id"],
                source=rec["source"],
                task=rec["task"],
                seed=rec["seed"],
                events=[tuple(e) for e in rec["events"]],
                config=rec["config"],
                final_state=rec["final_state"],
                **kwargs,
            )
        )
    return demos


def _parse_line(line: str, index: int) -> dict:
    try:
        return json.loads(line)
    except json.JSONDecodeError as e:
        raise CorruptRecordError(f"record {index}: invalid JSON ({e})") from None


# ---------------------------------------------------------------------------
# Training windows
# ---------------------------------------------------------------------------


@dataclass
class WindowSet:
    states: np.ndarray  # (W, S)
    actions: np.ndarray  # (W, N, D)
    padded: np.ndarray  # (W,) bool
    layout: EncodingLayout


def demo_layout(demo: Demonstration) -> EncodingLayout:
    return EncodingLayout(n_effectors=demo.n_effectors, n_markers=1)


def make_training_windows(
    demos: list,
    horizon: int = HORIZON,
    stride: int = 1,
    tau_max: float = 20.0,
) -> WindowSet:
    """Subsample each episode to 5 Hz and cut anchored windows.

    Episodes shorter than the horizon yield one window padded by holding the
    final command (flagged). Longer episodes yield one window per stride
    that fits entirely inside the episode.
    """
    if not demos:
        raise EmptyDatasetError("no demonstrations")
    layout = demo_layout(demos[0])
    states, actions, padded = [], [], []
    for demo in demos:
        if demo.n_effectors != layout.n_effectors:
            raise ValueError("mixed effector counts in one dataset")
        sub = np.arange(0, len(demo.t), SUBSAMPLE)
        cmds = demo.cmds[sub]
        contact = demo.contact[sub]
        tau = demo.tau[sub]
        mpose = demo.marker_pose[sub]
        mage = demo.marker_age[sub]
        n5 = len(sub)
        if n5 >= horizon:
            anchors = range(0, n5 - horizon + 1, stride)
        else:
            anchors = [0]
        for k in anchors:
            effs = [
                EffectorSnapshot(
                    pose=Pose2(cmds[k, i, :2].copy(), cmds[k, i, 2]),
                    contact=int(contact[k, i]),
                    tau=float(tau[k, i]),
                )
                for i in range(layout.n_effectors)
            ]
            markers = [MarkerSnapshot(Pose2(mpose[k, :2].copy(), mpose[k, 2]), float(mage[k]))]
            states.append(encode_state(effs, markers, layout, tau_max))
            rows = cmds[k : k + horizon]
            if len(rows) < horizon:
                pad = np.repeat(rows[-1:], horizon - len(rows), axis=0)
                rows = np.concatenate([rows, pad], axis=0)
                padded.append(True)
            else:
                padded.append(False)
            current = [p.pose for p in effs]
            abs_cmds = [
                [(Pose2(rows[s, i, :2].copy(), rows[s, i, 2]), rows[s, i, 3]) for i in range(layout.n_effectors)]
                for s in range(horizon)
            ]
            actions.append(encode_actions(abs_cmds, current, layout))
    return WindowSet(
        states=np.asarray(states),
        actions=np.asarray(actions),
        padded=np.asarray(padded, dtype=bool),
        layout=layout,
    )


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


@dataclass
class NormStats:
    state_lo: np.ndarray
    state_hi: np.ndarray
    state_const: np.ndarray  # bool mask of constant dimensions
    state_const_val: np.ndarray
    action_lo: np.ndarray
    action_hi: np.ndarray
    action_const: np.ndarray
    action_const_val: np.ndarray

    def normalize_states(self, s: np.ndarray) -> np.ndarray:
        return _normalize(s, self.state_lo, self.state_hi, self.state_const)

    def normalize_actions(self, a: np.ndarray) -> np.ndarray:
        return _normalize(a, self.action_lo, self.action_hi, self.action_const)

    def denormalize_actions(self, a: np.ndarray) -> np.ndarray:
        out = (np.asarray(a) + 1.0) / 2.0 * (self.action_hi - self.action_lo) + self.action_lo
        if self.action_const.any():
            out = out.copy()
            out[..., self.action_const] = self.action_const_val[self.action_const]
        return out

    def to_dict(self) -> dict:
        return {k: np.asarray(v).tolist() for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        conv = {}
        for k, v in d.items():
            arr = np.asarray(v)
            if k.endswith("_const"):
                arr = arr.astype(bool)
            conv[k] = arr
        return cls(**conv)


def _normalize(x, lo, hi, const):
    span = np.where(const, 1.0, hi - lo)
    out = 2.0 * (np.asarray(x) - lo) / span - 1.0
    if const.any():
        out = out.copy()
        out[..., const] = 0.0
    return out


def _min_max(x2d: np.ndarray, margin: float):
    lo = x2d.min(axis=0)
    hi = x2d.max(axis=0)
    span = hi - lo
    const = span < 1e-12
    const_val = lo.copy()
    lo = lo - margin * span
    hi = hi + margin * span
    return lo, hi, const, const_val


def compute_norm_stats(
    windows: WindowSet, margin: float = 0.05, tau_max: float = 20.0
) -> NormStats:
    """Per-dimension min/max over all windows with a symmetric margin.

    Dimensions with known semantic ranges (heading encodings, contact flags,
    clamped times, contact signals) are widened to at least those ranges so
    runtime values outside the demonstrated span stay representable and the
    marker-age augmentation has a stable scale. Remaining constant
    dimensions are flagged and map to 0 under normalization.
    """
    if len(windows.states) == 0:
        raise EmptyDatasetError("no windows to compute stats over")
    s_lo, s_hi, s_const, s_val = _min_max(windows.states, margin)
    flat = windows.actions.reshape(-1, windows.actions.shape[-1])
    a_lo, a_hi, a_const, a_val = _min_max(flat, margin)

    layout = windows.layout
    for i in range(layout.n_effectors):
        base = EFFECTOR_FIELDS * i
        _widen(s_lo, s_hi, s_const, base + 2, -1.0, 1.0)  # cos
        _widen(s_lo, s_hi, s_const, base + 3, -1.0, 1.0)  # sin
        _widen(s_lo, s_hi, s_const, base + 4, 0.0, 1.0)  # contact flag
        _widen(s_lo, s_hi, s_const, base + 5, 0.0, tau_max)  # switch age
    mbase = EFFECTOR_FIELDS * layout.n_effectors
    for j in range(layout.n_markers):
        base = mbase + MARKER_FIELDS * j
        _widen(s_lo, s_hi, s_const, base + 2, -1.0, 1.0)
        _widen(s_lo, s_hi, s_const, base + 3, -1.0, 1.0)
        _widen(s_lo, s_hi, s_const, base + 4, 0.0, tau_max)  # marker age
    for i in range(layout.n_effectors):
        _widen(a_lo, a_hi, a_const, ACTION_FIELDS * i + 3, 0.0, 1.0)  # gamma
    return NormStats(s_lo, s_hi, s_const, s_val, a_lo, a_hi, a_const, a_val)


def _widen(lo, hi, const, idx, known_lo, known_hi):
    lo[idx] = min(lo[idx], known_lo)
    hi[idx] = max(hi[idx], known_hi)
    const[idx] = False
