"""Independent FEMB writer for the published interchange layout.

    magic "FEMB" | version u32 = 1 | dim u32 | frames u32 | utt_id_len u32
    | utt_id UTF-8 | frames*dim float32 row-major, little-endian
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FEMB"
VERSION = 1


def write_embedding(frames: np.ndarray, utt_id: str, path: str | Path) -> None:
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 2 or min(frames.shape) < 1:
        raise ValueError(f"frames must be a non-empty (T, D) matrix, got {frames.shape}")
    if not np.all(np.isfinite(frames)):
        raise ValueError(f"{utt_id}: refusing to write non-finite embeddings")
    t, d = frames.shape
    utt = utt_id.encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<4sIIII", MAGIC, VERSION, d, t, len(utt)))
        fh.write(utt)
        fh.write(frames.tobytes())
