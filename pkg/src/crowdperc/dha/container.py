"""``DHA1`` binary container for named float32 tensors.

Layout (all integers little-endian)::

    4 bytes   magic b"DHA1"
    u32       tensor count
    per tensor:
        u16       name length in bytes, then the UTF-8 name
        u32       ndim, then ndim x u32 dims
        payload   prod(dims) x float32 LE, row-major

Attention weights are stored as tensors ``w_q``, ``w_k``, ``w_v`` (C x C).
Heatmap pyramids are stored as ``score_coarse``, ``score_regular``,
``score_fine`` (H x W), ``reg`` (10 x H_fine x W_fine) and ``reg_mask``
(H_fine x W_fine, 0/1).
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict

import numpy as np

from ..bev_encoding import GridSpec
from ..dataset_io import atomic_write_bytes
from .attention import AttentionWeights, Level
from .targets import REG_CHANNELS, HeatmapPyramid

MAGIC = b"DHA1"
_F32 = np.dtype("<f4")


class ContainerError(ValueError):
    pass


def encode_tensors(tensors: Dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        name_b = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_F32).tobytes())
    return b"".join(parts)


def decode_tensors(data: bytes) -> Dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise ContainerError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise ContainerError("container truncated")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError:
            raise ContainerError("tensor name is not valid UTF-8") from None
        if name in out:
            raise ContainerError(f"duplicate tensor {name!r}")
        (ndim,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        arr = np.frombuffer(take(4 * n), dtype=_F32).reshape(dims).copy()
        out[name] = arr
    if pos != len(data):
        raise ContainerError(f"{len(data) - pos} trailing bytes after last tensor")
    return out


def write_tensors(path, tensors) -> Path:
    path = Path(path)
    atomic_write_bytes(path, encode_tensors(tensors))
    return path


def read_tensors(path) -> Dict[str, np.ndarray]:
    return decode_tensors(Path(path).read_bytes())


def pyramid_tensors(h: HeatmapPyramid) -> Dict[str, np.ndarray]:
    t = {f"score_{lvl.value}": h.scores[lvl] for lvl in (Level.COARSE, Level.REGULAR, Level.FINE)}
    t["reg"] = h.reg
    t["reg_mask"] = h.reg_mask.astype(np.float32)
    return t


def pyramid_from_tensors(t: Dict[str, np.ndarray], grid: GridSpec) -> HeatmapPyramid:
    missing = [k for k in ("score_coarse", "score_regular", "score_fine", "reg", "reg_mask") if k not in t]
    if missing:
        raise ContainerError(f"pyramid container lacks tensors {missing}")
    scores = {lvl: t[f"score_{lvl.value}"] for lvl in Level}
    for lvl in Level:
        expect = grid.level_shape(lvl.stride)
        if scores[lvl].shape != expect:
            raise ContainerError(f"{lvl.value} map is {scores[lvl].shape}, grid implies {expect}")
    reg = t["reg"]
    if reg.shape != (len(REG_CHANNELS),) + scores[Level.FINE].shape:
        raise ContainerError(f"reg tensor has shape {reg.shape}")
    return HeatmapPyramid(grid=grid, scores=scores, reg=reg, reg_mask=t["reg_mask"] != 0)


def write_pyramid(h: HeatmapPyramid, path) -> Path:
    return write_tensors(path, pyramid_tensors(h))


def read_pyramid(path, grid: GridSpec) -> HeatmapPyramid:
    """The grid is not stored in the container and must match the writer's."""
    return pyramid_from_tensors(read_tensors(path), grid)


def write_attention_weights(w: AttentionWeights, path) -> Path:
    return write_tensors(path, {"w_q": w.w_q, "w_k": w.w_k, "w_v": w.w_v})


def read_attention_weights(path) -> AttentionWeights:
    t = read_tensors(path)
    try:
        return AttentionWeights(t["w_q"], t["w_k"], t["w_v"])
    except KeyError as exc:
        raise ContainerError(f"attention container lacks tensor {exc}") from None
