"""File formats: RAMap stacks, JSON-lines records, checkpoints and pixmaps.

All binary formats are little-endian.

RAMap file::

    b"RODR" | u32 version=1 | u32 num_frames | u32 range_bins | u32 azimuth_bins
    then per frame, range-major, each cell as float32 (real, imag)

Checkpoint file::

    b"RODW" | u32 version=1 | u32 tensor_count
    per tensor: u16 name_len | name (utf-8) | u8 rank | u32 dims[rank] | float32 payload
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import ConfigError

RAMAP_MAGIC = b"RODR"
CKPT_MAGIC = b"RODW"
FORMAT_VERSION = 1


def write_ramaps(path, ramaps) -> None:
    ramaps = np.asarray(ramaps)
    if ramaps.ndim == 2:
        ramaps = ramaps[None]
    if ramaps.ndim != 3:
        raise ConfigError(f"expected [frame, range, azimuth] RAMaps, got {ramaps.shape}")
    f, r, a = ramaps.shape
    body = np.empty((f, r, a, 2), dtype="<f4")
    body[..., 0] = ramaps.real
    body[..., 1] = ramaps.imag
    with open(path, "wb") as fh:
        fh.write(RAMAP_MAGIC)
        fh.write(struct.pack("<4I", FORMAT_VERSION, f, r, a))
        fh.write(body.tobytes())


def read_ramaps(path) -> np.ndarray:
    """Read a RAMap file into a complex64 array ``[frame, range, azimuth]``."""
    data = Path(path).read_bytes()
    if data[:4] != RAMAP_MAGIC:
        raise ConfigError(f"{path}: not a RAMap file (bad magic)")
    version, f, r, a = struct.unpack_from("<4I", data, 4)
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported RAMap version {version}")
    body = np.frombuffer(data, dtype="<f4", offset=20)
    if body.size != f * r * a * 2:
        raise ConfigError(f"{path}: truncated RAMap payload")
    # (real, imag) float32 pairs are exactly the complex64 memory layout
    return np.array(body, dtype=np.float32).view(np.complex64).reshape(f, r, a)


def write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def save_checkpoint(path, model, spec_sidecar: bool = True) -> None:
    """Write a parameter store.

    The model spec and input normalization go to a ``<path>.json`` sidecar.
    """
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<2I", FORMAT_VERSION, len(model.tensors)))
        for name, arr in model.tensors.items():
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    if spec_sidecar:
        from dataclasses import asdict

        norm = model.input_norm.to_dict() if model.input_norm is not None else None
        Path(str(path) + ".json").write_text(
            json.dumps({"spec": asdict(model.spec), "input_norm": norm}, indent=2))


def read_checkpoint_tensors(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != CKPT_MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<2I", data, 4)
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos: pos + n].decode()
        pos += n
        (rank,) = struct.unpack_from("<B", data, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        out[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims).copy()
        pos += 4 * size
    if pos != len(data):
        raise ConfigError(f"{path}: trailing bytes after {count} tensors")
    return out


def load_checkpoint(path, spec=None):
    from .nn.estimator import InputNorm
    from .nn.model import ModelSpec, ParamStore, layer_table

    side = Path(str(path) + ".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    if spec is None:
        if "spec" not in meta:
            raise ConfigError(f"{path}: no model spec given and no {side.name} sidecar")
        spec = ModelSpec(**meta["spec"])
    norm = InputNorm(**meta["input_norm"]) if meta.get("input_norm") else None
    tensors = read_checkpoint_tensors(path)
    expected = [(n, s) for n, s, _, _ in layer_table(spec)]
    got = [(n, t.shape) for n, t in tensors.items()]
    if got != expected:
        raise ConfigError(f"{path}: tensors do not match the {spec.variant} layout")
    return ParamStore(spec, tensors, norm)


# -- portable pixmaps -------------------------------------------------------------

def write_pgm(path, image) -> None:
    """Binary P5 grayscale; ``image`` is uint8 ``(rows, cols)``."""
    img = np.asarray(image, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def write_ppm(path, image) -> None:
    """Binary P6 color; ``image`` is uint8 ``(rows, cols, 3)``."""
    img = np.asarray(image, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def read_pnm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    magic, w, h, maxval, body = parts[0], int(parts[1]), int(parts[2]), int(parts[3]), parts[4]
    if maxval != 255:
        raise ConfigError("only 8-bit pixmaps are supported")
    body = data[len(data) - (w * h * (3 if magic == b"P6" else 1)):]
    arr = np.frombuffer(body, dtype=np.uint8)
    return arr.reshape(h, w, 3) if magic == b"P6" else arr.reshape(h, w)
