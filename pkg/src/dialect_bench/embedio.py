"""FEMB: bit-exact binary interchange for frame-level embedding sequences.

Layout (all integers and floats little-endian):

    magic "FEMB" | version u32 = 1 | dim u32 | frames u32 | utt_id_len u32
    | utt_id UTF-8 | frames*dim float32 row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"FEMB"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class FembError(ValueError):
    """Base error for unreadable FEMB files."""


class FembMagicError(FembError):
    pass


class FembVersionError(FembError):
    pass


class FembTruncationError(FembError):
    pass


@dataclass
class EmbeddingSequence:
    frames: np.ndarray      # (T, D) float32, finite
    utt_id: str

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1 or self.frames.shape[1] < 1:
            raise ValueError(f"frames must be (T>=1, D>=1), got shape {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError(f"{self.utt_id or '<embedding>'}: non-finite values in frames")
        if not self.utt_id:
            raise ValueError("utt_id must be non-empty")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def write_femb(e: EmbeddingSequence, path: str | Path) -> None:
    utt = e.utt_id.encode("utf-8")
    header = _HEADER.pack(MAGIC, VERSION, e.dim, e.num_frames, len(utt))
    payload = np.ascontiguousarray(e.frames, dtype="<f4").tobytes()
    with Path(path).open("wb") as fh:
        fh.write(header)
        fh.write(utt)
        fh.write(payload)


def read_femb(path: str | Path) -> EmbeddingSequence:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FembTruncationError(f"{path}: file shorter than the fixed header")
    magic, version, dim, frames, utt_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FembMagicError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FembVersionError(f"{path}: unsupported version {version}")
    if dim < 1 or frames < 1:
        raise FembError(f"{path}: invalid shape ({frames} x {dim})")
    offset = _HEADER.size
    if len(data) < offset + utt_len:
        raise FembTruncationError(f"{path}: utt_id truncated")
    utt_id = data[offset : offset + utt_len].decode("utf-8")
    offset += utt_len
    need = frames * dim * 4
    if len(data) - offset < need:
        raise FembTruncationError(
            f"{path}: declared {frames}x{dim} floats but only {len(data) - offset} bytes remain"
        )
    if len(data) - offset > need:
        raise FembError(f"{path}: {len(data) - offset - need} trailing bytes after payload")
    mat = np.frombuffer(data, dtype="<f4", count=frames * dim, offset=offset)
    mat = mat.reshape(frames, dim).astype(np.float32)
    if not np.all(np.isfinite(mat)):
        raise FembError(f"{path}: non-finite values in payload")
    return EmbeddingSequence(mat, utt_id)


def femb_path(directory: str | Path, utt_id: str) -> Path:
    """Directory-of-files layout: one ``<utt_id>.femb`` per utterance."""
    if "/" in utt_id or "\\" in utt_id:
        raise ValueError(f"utt_id {utt_id!r} contains a path separator")
    return Path(directory) / f"{utt_id}.femb"
