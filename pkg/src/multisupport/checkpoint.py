"""Self-describing binary checkpoint container.

Layout: magic, format version, uint64 header length, UTF-8 JSON header,
then raw little-endian tensor payloads in header order. The header carries
tensor names/shapes/dtype, the network config, a method tag, and arbitrary
extra payloads (noise schedule, normalization stats).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .unet import UNetConfig

MAGIC = b"MSUP"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(
    path,
    params: dict,
    config: UNetConfig,
    method: str = "flow",
    extras: dict | None = None,
) -> None:
    names = sorted(params.keys())
    arrays = {}
    for k in names:
        v = params[k]
        arr = v.data if hasattr(v, "data") and not isinstance(v, np.ndarray) else v
        arrays[k] = np.asarray(arr)
    header = {
        "format_version": FORMAT_VERSION,
        "method": method,
        "config": config.to_dict(),
        "param_count": int(sum(a.size for a in arrays.values())),
        "tensors": [
            {
                "name": k,
                "shape": list(arrays[k].shape),
                "dtype": str(arrays[k].dtype),
            }
            for k in names
        ],
        "extras": extras or {},
    }
    blob = json.dumps(header).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for k in names:
            f.write(np.ascontiguousarray(arrays[k]).astype(arrays[k].dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path):
    """Return (params dict of ndarrays, UNetConfig, method, extras)."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}, not a checkpoint file")
        (version,) = struct.unpack("<I", f.read(4))
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {version} unsupported (expected {FORMAT_VERSION})"
            )
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        params = {}
        for spec in header["tensors"]:
            dtype = np.dtype(spec["dtype"]).newbyteorder("<")
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            buf = f.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise CheckpointError(f"truncated payload for tensor {spec['name']}")
            params[spec["name"]] = (
                np.frombuffer(buf, dtype=dtype).reshape(spec["shape"]).copy()
            )
    config = UNetConfig.from_dict(header["config"])
    return params, config, header["method"], header.get("extras", {})
