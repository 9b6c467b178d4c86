"""Lenient audio ingest for extraction: PCM16 WAV, downmix to mono, resample
to the encoder's 16 kHz input rate with linear interpolation."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

TARGET_RATE = 16000


class AudioError(ValueError):
    pass


def load_audio_16k(path: str | Path) -> np.ndarray:
    """Mono float32 samples at 16 kHz in [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getsampwidth() != 2 or wf.getcomptype() != "NONE":
                raise AudioError(f"{path}: only uncompressed PCM16 WAV is supported")
            channels = wf.getnchannels()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError, OSError) as exc:
        raise AudioError(f"{path}: unreadable WAV ({exc})") from None
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    if rate != TARGET_RATE:
        samples = _linear_resample(samples, rate, TARGET_RATE)
    if samples.size == 0:
        raise AudioError(f"{path}: empty audio")
    return samples.astype(np.float32)


def _linear_resample(x: np.ndarray, src: int, dst: int) -> np.ndarray:
    out_len = int(round(len(x) * dst / src))
    pos = np.arange(out_len) * (src / dst)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, len(x) - 1)
    frac = pos - lo
    return (1.0 - frac) * x[np.minimum(lo, len(x) - 1)] + frac * x[hi]
