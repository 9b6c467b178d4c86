"""Attention-pooling classifier head: forward pass, losses, analytic gradients.

Frame embeddings h_t are scored by s_t = v . tanh(W h_t + b), softmaxed into
attention weights, and pooled into a weighted mean (optionally concatenated
with the weighted standard deviation).  A linear layer + log-softmax yields
class log-posteriors.  All math runs in float64; checkpoints store float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedio import EmbeddingSequence

HEAD_MAGIC = b"HEAD"
HEAD_VERSION = 1
_HEAD_HEADER = struct.Struct("<4sIIIIII")

POOLING_MODES = ("mean", "mean_std")
VAR_EPS = 1e-8

# parameter names in checkpoint order; adapter tensors are the low-LR group
HEAD_PARAM_NAMES = ("w_att", "b_att", "v_att", "w_cls", "b_cls")
ADAPTER_PARAM_NAMES = ("w_adapt", "b_adapt")


@dataclass
class HeadConfig:
    dim: int
    n_classes: int
    att_dim: int = 128
    pooling: str = "mean_std"
    adapter: bool = False

    def __post_init__(self) -> None:
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        if min(self.dim, self.n_classes, self.att_dim) < 1:
            raise ValueError("dim, n_classes and att_dim must all be >= 1")

    @property
    def pooled_dim(self) -> int:
        return self.dim * (2 if self.pooling == "mean_std" else 1)


@dataclass
class HeadParameters:
    config: HeadConfig
    w_att: np.ndarray                  # (A, D)
    b_att: np.ndarray                  # (A,)
    v_att: np.ndarray                  # (A,)
    w_cls: np.ndarray                  # (C, P)
    b_cls: np.ndarray                  # (C,)
    w_adapt: np.ndarray | None = None  # (D, D)
    b_adapt: np.ndarray | None = None  # (D,)

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        out = [(n, getattr(self, n)) for n in HEAD_PARAM_NAMES]
        if self.config.adapter:
            out += [(n, getattr(self, n)) for n in ADAPTER_PARAM_NAMES]
        return out

    def copy(self) -> "HeadParameters":
        return HeadParameters(
            self.config,
            *(getattr(self, n).copy() for n in HEAD_PARAM_NAMES),
            *(
                (self.w_adapt.copy(), self.b_adapt.copy())
                if self.config.adapter
                else (None, None)
            ),
        )

    def zeros_like(self) -> "HeadParameters":
        return HeadParameters(
            self.config,
            *(np.zeros_like(getattr(self, n)) for n in HEAD_PARAM_NAMES),
            *(
                (np.zeros_like(self.w_adapt), np.zeros_like(self.b_adapt))
                if self.config.adapter
                else (None, None)
            ),
        )

    def validate(self) -> None:
        cfg = self.config
        shapes = {
            "w_att": (cfg.att_dim, cfg.dim),
            "b_att": (cfg.att_dim,),
            "v_att": (cfg.att_dim,),
            "w_cls": (cfg.n_classes, cfg.pooled_dim),
            "b_cls": (cfg.n_classes,),
        }
        if cfg.adapter:
            shapes["w_adapt"] = (cfg.dim, cfg.dim)
            shapes["b_adapt"] = (cfg.dim,)
        for name, want in shapes.items():
            arr = getattr(self, name)
            if arr is None or arr.shape != want:
                got = None if arr is None else arr.shape
                raise ValueError(f"{name}: expected shape {want}, got {got}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite parameter values")


@dataclass
class HeadOutput:
    log_probs: np.ndarray   # (C,)
    attention: np.ndarray   # (T,)
    pooled: np.ndarray      # (P,)


def init_head(cfg: HeadConfig, seed: int) -> HeadParameters:
    """Seeded Gaussian init scaled by 1/sqrt(fan_in); adapter starts at identity."""
    rng = np.random.default_rng(seed)
    w_att = rng.standard_normal((cfg.att_dim, cfg.dim)) / np.sqrt(cfg.dim)
    b_att = np.zeros(cfg.att_dim)
    v_att = rng.standard_normal(cfg.att_dim) / np.sqrt(cfg.att_dim)
    w_cls = rng.standard_normal((cfg.n_classes, cfg.pooled_dim)) / np.sqrt(cfg.pooled_dim)
    b_cls = np.zeros(cfg.n_classes)
    w_adapt = np.eye(cfg.dim) if cfg.adapter else None
    b_adapt = np.zeros(cfg.dim) if cfg.adapter else None
    return HeadParameters(cfg, w_att, b_att, v_att, w_cls, b_cls, w_adapt, b_adapt)


def _as_frames(e: EmbeddingSequence | np.ndarray) -> np.ndarray:
    frames = e.frames if isinstance(e, EmbeddingSequence) else np.asarray(e)
    if frames.ndim != 2:
        raise ValueError(f"expected a (T, D) matrix, got shape {frames.shape}")
    if not np.all(np.isfinite(frames)):
        raise ValueError("non-finite values in input frames")
    return frames.astype(np.float64)


def _forward_parts(p: HeadParameters, frames: np.ndarray):
    cfg = p.config
    if frames.shape[1] != cfg.dim:
        raise ValueError(f"embedding dim {frames.shape[1]} != configured dim {cfg.dim}")
    h = frames
    if cfg.adapter:
        h = h @ p.w_adapt.T + p.b_adapt
    act = np.tanh(h @ p.w_att.T + p.b_att)        # (T, A)
    scores = act @ p.v_att                        # (T,)
    scores = scores - scores.max()
    alpha = np.exp(scores)
    alpha /= alpha.sum()
    mu = alpha @ h                                # (D,)
    if cfg.pooling == "mean_std":
        dev = h - mu
        var = alpha @ (dev**2) + VAR_EPS
        sigma = np.sqrt(var)
        pooled = np.concatenate([mu, sigma])
    else:
        dev = sigma = None
        pooled = mu
    logits = p.w_cls @ pooled + p.b_cls
    log_probs = logits - _logsumexp(logits)
    return h, act, alpha, mu, dev, sigma, pooled, log_probs


def _logsumexp(x: np.ndarray) -> float:
    m = x.max()
    return m + np.log(np.exp(x - m).sum())


def forward(p: HeadParameters, e: EmbeddingSequence | np.ndarray) -> HeadOutput:
    frames = _as_frames(e)
    _, _, alpha, _, _, _, pooled, log_probs = _forward_parts(p, frames)
    return HeadOutput(log_probs, alpha, pooled)


def smoothed_targets(n_classes: int, label: int, smoothing: float) -> np.ndarray:
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    if not 0.0 <= smoothing < 1.0:
        raise ValueError(f"smoothing must be in [0, 1), got {smoothing}")
    q = np.full(n_classes, smoothing / n_classes)
    q[label] += 1.0 - smoothing
    return q


def nll_loss(
    out: HeadOutput | np.ndarray, label: int, smoothing: float = 0.0
) -> tuple[float, np.ndarray]:
    """(Label-smoothed) negative log-likelihood and its gradient w.r.t. log_probs.

    loss = -sum_c q_c * log_probs_c with q = (1-s)*onehot(label) + s/C;
    smoothing 0 reduces to plain NLL.
    """
    log_probs = out.log_probs if isinstance(out, HeadOutput) else np.asarray(out)
    q = smoothed_targets(len(log_probs), label, smoothing)
    return float(-(q @ log_probs)), -q


def backward(
    p: HeadParameters,
    e: EmbeddingSequence | np.ndarray,
    label: int,
    smoothing: float = 0.0,
) -> tuple[float, HeadParameters, HeadOutput]:
    """Loss and exact analytic gradients w.r.t. every parameter.

    Returns (loss, grads, output) where grads mirrors HeadParameters.  Key
    identities: d loss / d logits = softmax(logits) - q, and the variance term
    carries no gradient through the attention-weighted mean because
    sum_t alpha_t (h_t - mu) = 0.
    """
    cfg = p.config
    frames = _as_frames(e)
    h, act, alpha, mu, dev, sigma, pooled, log_probs = _forward_parts(p, frames)
    q = smoothed_targets(cfg.n_classes, label, smoothing)
    loss = float(-(q @ log_probs))

    g_logits = np.exp(log_probs) - q
    g_wcls = np.outer(g_logits, pooled)
    g_bcls = g_logits
    g_pooled = p.w_cls.T @ g_logits

    d = cfg.dim
    if cfg.pooling == "mean_std":
        g_mu = g_pooled[:d]
        g_var = g_pooled[d:] / (2.0 * sigma)
        # dL/d alpha_t: direct paths through mu and var
        c = h @ g_mu + (dev**2) @ g_var
        g_h = np.outer(alpha, g_mu) + 2.0 * alpha[:, None] * (dev * g_var[None, :])
    else:
        g_mu = g_pooled
        c = h @ g_mu
        g_h = np.outer(alpha, g_mu)

    g_scores = alpha * (c - alpha @ c)
    g_v = act.T @ g_scores
    g_act = np.outer(g_scores, p.v_att) * (1.0 - act**2)
    g_watt = g_act.T @ h
    g_batt = g_act.sum(axis=0)
    g_h += g_act @ p.w_att

    if cfg.adapter:
        g_wadapt = g_h.T @ frames
        g_badapt = g_h.sum(axis=0)
    else:
        g_wadapt = g_badapt = None

    grads = HeadParameters(cfg, g_watt, g_batt, g_v, g_wcls, g_bcls, g_wadapt, g_badapt)
    return loss, grads, HeadOutput(log_probs, alpha, pooled)


def params_to_bytes(p: HeadParameters) -> bytes:
    """Binary checkpoint: magic "HEAD", version, dims, flags, float32 tensors."""
    p.validate()
    cfg = p.config
    flags = 1 if cfg.adapter else 0
    parts = [
        _HEAD_HEADER.pack(
            HEAD_MAGIC, HEAD_VERSION, cfg.dim, cfg.att_dim, cfg.n_classes, cfg.pooled_dim, flags
        )
    ]
    parts += [np.ascontiguousarray(arr, dtype="<f4").tobytes() for _, arr in p.tensors()]
    return b"".join(parts)


def params_from_bytes(data: bytes, origin: str = "<bytes>") -> HeadParameters:
    if len(data) < _HEAD_HEADER.size:
        raise ValueError(f"{origin}: truncated checkpoint header")
    magic, version, dim, att_dim, n_classes, pooled_dim, flags = _HEAD_HEADER.unpack_from(data)
    if magic != HEAD_MAGIC:
        raise ValueError(f"{origin}: bad checkpoint magic {magic!r}")
    if version != HEAD_VERSION:
        raise ValueError(f"{origin}: unsupported checkpoint version {version}")
    pooling = "mean_std" if pooled_dim == 2 * dim else "mean"
    cfg = HeadConfig(dim, n_classes, att_dim, pooling, adapter=bool(flags & 1))
    shapes = [
        (att_dim, dim), (att_dim,), (att_dim,), (n_classes, pooled_dim), (n_classes,),
    ]
    if cfg.adapter:
        shapes += [(dim, dim), (dim,)]
    offset = _HEAD_HEADER.size
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        if len(data) - offset < 4 * count:
            raise ValueError(f"{origin}: checkpoint truncated in tensor data")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        arrays.append(arr.reshape(shape).astype(np.float64))
        offset += 4 * count
    if offset != len(data):
        raise ValueError(f"{origin}: {len(data) - offset} trailing bytes in checkpoint")
    params = HeadParameters(cfg, *arrays)
    params.validate()
    return params


def save_params(p: HeadParameters, path: str | Path) -> None:
    Path(path).write_bytes(params_to_bytes(p))


def load_params(path: str | Path) -> HeadParameters:
    return params_from_bytes(Path(path).read_bytes(), origin=str(path))
