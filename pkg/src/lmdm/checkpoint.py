"""Binary checkpoint container.

Layout (all integers little-endian):
  magic "LMDM" | u32 version | u8 stage tag (0=ae, 1=diffusion) | u64 seed
  u32 config-block length | config block (utf-8 "key=value\\n" lines)
  u32 array count, then per array:
    u32 name length | name utf-8 | u32 ndim | u64 dims... | float64 LE data

Round-trips byte-exactly: write -> read -> write produces identical bytes.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

MAGIC = b"LMDM"
VERSION = 1
_STAGES = {"ae": 0, "diffusion": 1}
_STAGE_NAMES = {v: k for k, v in _STAGES.items()}


class CheckpointError(ValueError):
    """Raised on malformed checkpoint bytes or config mismatch."""


def save_checkpoint(path, stage: str, arrays: dict[str, np.ndarray],
                    config: dict[str, str], seed: int) -> None:
    if stage not in _STAGES:
        raise CheckpointError(f"unknown stage {stage!r}")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IBQ", VERSION, _STAGES[stage], seed))
    cfg = "".join(f"{k}={v}\n" for k, v in sorted(config.items())).encode()
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")  # tobytes() below emits C order
        name_b = name.encode()
        buf.write(struct.pack("<I", len(name_b)))
        buf.write(name_b)
        buf.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(arr.tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path):
    """Returns (stage, arrays, config, seed)."""
    raw = Path(path).read_bytes()
    buf = io.BytesIO(raw)
    if buf.read(4) != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    version, stage_tag, seed = struct.unpack("<IBQ", buf.read(13))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if stage_tag not in _STAGE_NAMES:
        raise CheckpointError(f"unknown stage tag {stage_tag}")
    (cfg_len,) = struct.unpack("<I", buf.read(4))
    config = {}
    for line in buf.read(cfg_len).decode().splitlines():
        key, _, value = line.partition("=")
        config[key] = value
    (n_arrays,) = struct.unpack("<I", buf.read(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack("<I", buf.read(4))
        name = buf.read(name_len).decode()
        (ndim,) = struct.unpack("<I", buf.read(4))
        shape = tuple(struct.unpack("<Q", buf.read(8))[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(buf.read(8 * count), dtype="<f8").reshape(shape)
        arrays[name] = data.copy()
    if buf.read(1):
        raise CheckpointError("trailing bytes after last array")
    return _STAGE_NAMES[stage_tag], arrays, config, seed


def state_dict_to_arrays(module) -> dict[str, np.ndarray]:
    return {name: tensor.detach().cpu().numpy().astype("<f8")
            for name, tensor in module.state_dict().items()}


def arrays_to_state_dict(module, arrays: dict[str, np.ndarray]) -> None:
    import torch

    state = {name: torch.from_numpy(np.ascontiguousarray(arr))
             for name, arr in arrays.items()}
    module.load_state_dict(state)
