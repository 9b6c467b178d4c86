"""Fixed-weight reference encoders.

Each model id maps to a deterministic frame encoder: windowed waveform frames
(25 ms window, 20 ms hop = 50 frames/s) projected through a stack of tanh
layers whose weights are derived from the model id.  The weights never change,
so extraction is reproducible byte-for-byte; `layer` selects an intermediate
block output, mirroring a frozen-encoder tap point.  Heavier pretrained
backends can register themselves under new ids with the same interface.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
WINDOW = 400     # 25 ms
HOP = 320        # 20 ms -> 50 frames/s


class ModelLoadError(ValueError):
    """Unknown or unloadable model identifier."""


@dataclass(frozen=True)
class EncoderSpec:
    model_id: str
    dim: int
    n_layers: int
    frames_per_second: float = SAMPLE_RATE / HOP


_MODELS = {
    "sim-conv-v1": EncoderSpec("sim-conv-v1", 1280, 4),
    "sim-conv-small": EncoderSpec("sim-conv-small", 64, 2),
}


def available_models() -> tuple[str, ...]:
    return tuple(sorted(_MODELS))


def _layer_rng(model_id: str, layer: int) -> np.random.Generator:
    digest = hashlib.blake2b(f"{model_id}:{layer}".encode(), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


class FrameEncoder:
    def __init__(self, spec: EncoderSpec):
        self.spec = spec
        d = spec.dim
        rng = _layer_rng(spec.model_id, 0)
        self._w_in = (rng.standard_normal((WINDOW, d)) / np.sqrt(WINDOW)).astype(np.float32)
        self._b_in = np.zeros(d, dtype=np.float32)
        self._layers = []
        for k in range(1, spec.n_layers):
            rng = _layer_rng(spec.model_id, k)
            w = (rng.standard_normal((d, d)) / np.sqrt(d)).astype(np.float32)
            self._layers.append(w)

    def encode(self, samples_16k: np.ndarray, layer: int | None = None) -> np.ndarray:
        """(T, dim) float32 at 50 frames/s; `layer` k taps block k (1-based),
        None or n_layers taps the final output."""
        n_layers = self.spec.n_layers
        if layer is None:
            layer = n_layers
        if not 1 <= layer <= n_layers:
            raise ValueError(f"layer must be in 1..{n_layers}, got {layer}")
        x = np.asarray(samples_16k, dtype=np.float32)
        t = max(1, -(-len(x) // HOP))   # ceil(len / hop)
        padded = np.zeros(( (t - 1) * HOP + WINDOW,), dtype=np.float32)
        padded[: len(x)] = x
        idx = np.arange(t)[:, None] * HOP + np.arange(WINDOW)[None, :]
        frames = padded[idx]
        h = np.tanh(frames @ self._w_in + self._b_in)
        for k, w in enumerate(self._layers, start=2):
            if k > layer:
                break
            h = np.tanh(h @ w)
        return h.astype(np.float32)


def load_encoder(model_id: str) -> FrameEncoder:
    if model_id not in _MODELS:
        raise ModelLoadError(
            f"unknown model {model_id!r}; available: {', '.join(available_models())}"
        )
    return FrameEncoder(_MODELS[model_id])
