"""Audio ingestion and the log-mel frontend (16 kHz, 25 ms window, 10 ms hop, 128 mels)."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000


class WavFormatError(ValueError):
    """Unreadable or unsupported WAV input (non-PCM16, multi-channel, truncated)."""


@dataclass
class Waveform:
    samples: np.ndarray        # float32, 1-D, nominally in [-1, 1]
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FrontendConfig:
    sample_rate: int = SAMPLE_RATE
    n_fft: int = 400           # 25 ms window; window length == n_fft
    hop_length: int = 160      # 10 ms hop
    n_mels: int = 128
    log_floor: float = 1e-10
    dynamic_range: float = 8.0

    @property
    def hop_s(self) -> float:
        return self.hop_length / self.sample_rate


@dataclass
class MelSpectrogram:
    frames: np.ndarray         # (T, n_mels) float32
    hop_s: float
    n_mels: int

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[1] != self.n_mels:
            raise ValueError(f"frames must be (T, {self.n_mels}), got {self.frames.shape}")


def read_wav(path: str | Path) -> Waveform:
    """Read a mono PCM16 RIFF/WAVE file; samples are scaled by 1/32768 into [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getcomptype() != "NONE":
                raise WavFormatError(f"{path}: compressed WAV ({wf.getcomptype()}) not supported")
            if wf.getnchannels() != 1:
                raise WavFormatError(f"{path}: expected mono, got {wf.getnchannels()} channels")
            if wf.getsampwidth() != 2:
                raise WavFormatError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: not a readable PCM WAV file ({exc})") from None
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    return Waveform(samples, rate)


def write_wav(path: str | Path, w: Waveform) -> None:
    pcm = np.clip(np.rint(w.samples.astype(np.float64) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(pcm.tobytes())


def _hann(n: int) -> np.ndarray:
    # periodic Hann, matches standard STFT analysis windows
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def sinc_interpolate(x: np.ndarray, step: float, out_len: int) -> np.ndarray:
    """Band-limited interpolation y[n] = x(n * step) with a Hann-windowed sinc kernel.

    `step` > 1 compresses (the kernel widens and the cutoff drops to avoid
    aliasing); 64-tap half-width at the output's effective rate.
    """
    x = np.asarray(x, dtype=np.float64)
    if out_len <= 0:
        return np.zeros(0, dtype=np.float64)
    scale = min(1.0, 1.0 / step)
    half = 64.0 / scale
    reach = int(np.ceil(half))
    t = np.arange(out_len) * step
    base = np.floor(t).astype(np.int64)
    offsets = np.arange(-reach, reach + 2)
    idx = base[:, None] + offsets[None, :]
    u = t[:, None] - idx
    kernel = scale * np.sinc(scale * u) * (0.5 + 0.5 * np.cos(np.pi * u / half))
    kernel[np.abs(u) > half] = 0.0
    valid = (idx >= 0) & (idx < len(x))
    taps = np.where(valid, x[np.clip(idx, 0, len(x) - 1)], 0.0)
    return np.einsum("ij,ij->i", taps, kernel)


def resample(w: Waveform, target_hz: int) -> Waveform:
    """Windowed-sinc resampling; output length = round(len * target / source)."""
    if target_hz <= 0:
        raise ValueError(f"target_hz must be positive, got {target_hz}")
    if target_hz == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    out_len = int(round(len(w) * target_hz / w.sample_rate))
    y = sinc_interpolate(w.samples, w.sample_rate / target_hz, out_len)
    return Waveform(y.astype(np.float32), target_hz)


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (np.power(10.0, np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FrontendConfig) -> np.ndarray:
    """(n_mels, n_fft//2+1) triangular filters on the HTK mel scale, 0..Nyquist."""
    n_bins = cfg.n_fft // 2 + 1
    freqs = np.arange(n_bins) * cfg.sample_rate / cfg.n_fft
    pts = _mel_to_hz(np.linspace(0.0, _hz_to_mel(cfg.sample_rate / 2.0), cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        lo, mid, hi = pts[m], pts[m + 1], pts[m + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_center_frequencies(cfg: FrontendConfig) -> np.ndarray:
    pts = _mel_to_hz(np.linspace(0.0, _hz_to_mel(cfg.sample_rate / 2.0), cfg.n_mels + 2))
    return pts[1:-1]


def frame_count(n_samples: int, cfg: FrontendConfig) -> int:
    return 1 + (n_samples - cfg.n_fft) // cfg.hop_length


def mel_power(w: Waveform, cfg: FrontendConfig | None = None) -> np.ndarray:
    """(T, n_mels) mel-filtered power spectrogram, float64, before any log/clamp."""
    cfg = cfg or FrontendConfig()
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(f"expected {cfg.sample_rate} Hz input, got {w.sample_rate} Hz")
    if len(w) < cfg.n_fft:
        raise ValueError(f"waveform shorter than one window ({len(w)} < {cfg.n_fft} samples)")
    t = frame_count(len(w), cfg)
    idx = np.arange(t)[:, None] * cfg.hop_length + np.arange(cfg.n_fft)[None, :]
    frames = w.samples.astype(np.float64)[idx] * _hann(cfg.n_fft)[None, :]
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    return power @ mel_filterbank(cfg).T


def log_mel(w: Waveform, cfg: FrontendConfig | None = None) -> MelSpectrogram:
    """Log-mel features: log10 with floor, clamp to an 8-unit dynamic range from the
    global max, then the affine (x + 4) / 4 normalization."""
    cfg = cfg or FrontendConfig()
    mel = mel_power(w, cfg)
    logmel = np.log10(np.maximum(mel, cfg.log_floor))
    logmel = np.maximum(logmel, logmel.max() - cfg.dynamic_range)
    logmel = (logmel + 4.0) / 4.0
    return MelSpectrogram(logmel.astype(np.float32), cfg.hop_s, cfg.n_mels)
