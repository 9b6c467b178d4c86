"""Seeded, deterministic augmentations: additive noise at a target SNR, speed
perturbation, frequency masking on mel features, chunk-level dropout."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .dsp import MelSpectrogram, Waveform, sinc_interpolate


@dataclass
class FreqMaskSpec:
    n_masks: int = 2
    max_width_bins: int = 10


@dataclass
class ChunkDropSpec:
    n_chunks: int = 2
    chunk_len_s: float = 0.1
    drop_value: float = 0.0


@dataclass
class AugmentSpec:
    snr_db_range: tuple[float, float] = (0.0, 15.0)
    speed_factors: tuple[float, ...] = (0.9, 1.0, 1.1)
    freq_mask: FreqMaskSpec = field(default_factory=FreqMaskSpec)
    chunk_drop: ChunkDropSpec = field(default_factory=ChunkDropSpec)
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.snr_db_range
        if lo > hi:
            raise ValueError(f"snr_db_range must satisfy lo <= hi, got {self.snr_db_range}")
        if any(f <= 0 for f in self.speed_factors):
            raise ValueError(f"speed factors must be positive, got {self.speed_factors}")
        if self.freq_mask.n_masks < 0 or self.freq_mask.max_width_bins < 0:
            raise ValueError("freq_mask counts must be non-negative")
        if self.chunk_drop.n_chunks < 0 or self.chunk_drop.chunk_len_s < 0:
            raise ValueError("chunk_drop settings must be non-negative")


def derive_seed(seed: int, utt_id: str) -> int:
    """Stable per-utterance seed: base seed XOR a digest of the utterance id."""
    h = int.from_bytes(hashlib.blake2b(utt_id.encode("utf-8"), digest_size=8).digest(), "little")
    return (seed ^ h) & 0x7FFFFFFFFFFFFFFF


def add_noise(w: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """Mix noise into the signal at the requested SNR.

    The noise is tiled or truncated to the signal length, then scaled by
    g = sqrt(P_signal / (P_noise * 10^(snr/10))) with powers measured over the
    full length.  snr_db = +inf is the no-noise limit (gain 0).
    """
    if noise.sample_rate != w.sample_rate:
        raise ValueError(
            f"sample-rate mismatch: signal {w.sample_rate} Hz vs noise {noise.sample_rate} Hz"
        )
    if math.isinf(snr_db) and snr_db > 0:
        return Waveform(w.samples.copy(), w.sample_rate)
    sig = w.samples.astype(np.float64)
    nz = np.resize(noise.samples.astype(np.float64), len(sig))
    p_sig = float(np.mean(sig**2))
    p_nz = float(np.mean(nz**2))
    if p_sig <= 0.0:
        raise ValueError("signal power is zero; SNR is undefined")
    if p_nz <= 0.0:
        raise ValueError("noise power is zero; SNR is undefined")
    gain = math.sqrt(p_sig / (p_nz * 10.0 ** (snr_db / 10.0)))
    return Waveform((sig + gain * nz).astype(np.float32), w.sample_rate)


def speed_perturb(w: Waveform, factor: float) -> Waveform:
    """Resample-and-relabel speed change: duration scales by 1/factor and pitch
    shifts with it.  Output length = round(len / factor)."""
    if factor <= 0:
        raise ValueError(f"speed factor must be positive, got {factor}")
    if factor == 1.0:
        return Waveform(w.samples.copy(), w.sample_rate)
    out_len = int(round(len(w) / factor))
    y = sinc_interpolate(w.samples, factor, out_len)
    return Waveform(y.astype(np.float32), w.sample_rate)


def freq_mask(
    s: MelSpectrogram, n_masks: int, max_width: int, rng: np.random.Generator
) -> MelSpectrogram:
    """Mask `n_masks` random mel-bin bands with the spectrogram's mean value.

    Per mask, width ~ U[0, max_width] and start ~ U[0, M - width]; everything
    outside the masked bands is copied bit-identically.
    """
    m = s.n_mels
    if max_width >= m:
        raise ValueError(f"max_width ({max_width}) must be < n_mels ({m})")
    out = s.frames.copy()
    fill = s.frames.mean()
    for _ in range(n_masks):
        width = int(rng.integers(0, max_width + 1))
        start = int(rng.integers(0, m - width + 1))
        out[:, start : start + width] = fill
    return MelSpectrogram(out, s.hop_s, s.n_mels)


def chunk_dropout(
    w: Waveform,
    n_chunks: int,
    chunk_len_s: float,
    rng: np.random.Generator,
    drop_value: float = 0.0,
) -> Waveform:
    """Zero out `n_chunks` random intervals of `chunk_len_s`; overlaps allowed."""
    chunk = int(round(chunk_len_s * w.sample_rate))
    if chunk > len(w):
        raise ValueError(f"chunk of {chunk} samples longer than signal ({len(w)})")
    out = w.samples.copy()
    for _ in range(n_chunks):
        start = int(rng.integers(0, len(w) - chunk + 1))
        out[start : start + chunk] = drop_value
    return Waveform(out, w.sample_rate)


def augment_waveform(
    w: Waveform,
    spec: AugmentSpec,
    rng: np.random.Generator,
    noise: Waveform | None = None,
) -> Waveform:
    """One randomized waveform-domain pass: speed, additive noise, chunk dropout."""
    factor = spec.speed_factors[int(rng.integers(0, len(spec.speed_factors)))]
    out = speed_perturb(w, factor)
    if noise is not None:
        snr = float(rng.uniform(spec.snr_db_range[0], spec.snr_db_range[1]))
        out = add_noise(out, noise, snr)
    if spec.chunk_drop.n_chunks > 0 and spec.chunk_drop.chunk_len_s > 0:
        chunk = int(round(spec.chunk_drop.chunk_len_s * out.sample_rate))
        if chunk <= len(out):
            out = chunk_dropout(
                out,
                spec.chunk_drop.n_chunks,
                spec.chunk_drop.chunk_len_s,
                rng,
                spec.chunk_drop.drop_value,
            )
    return out


def augment_features(s: MelSpectrogram, spec: AugmentSpec, rng: np.random.Generator) -> MelSpectrogram:
    """Feature-domain pass: frequency masking."""
    if spec.freq_mask.n_masks == 0:
        return s
    return freq_mask(s, spec.freq_mask.n_masks, spec.freq_mask.max_width_bins, rng)
