"""Training loop: Adam with two learning-rate groups, NewBob annealing, early
stopping, and the two-stage fine-tuning protocol (broad corpus, then adaptation)."""

from __future__ import annotations

import logging
import random
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Manifest, UtteranceRecord
from .embedio import read_femb, femb_path
from .head import (
    ADAPTER_PARAM_NAMES,
    HeadConfig,
    HeadParameters,
    backward,
    forward,
    init_head,
    nll_loss,
    params_from_bytes,
    params_to_bytes,
)

log = logging.getLogger(__name__)

STATE_MAGIC = b"TRST"
STATE_VERSION = 1


class NonFiniteGradientError(FloatingPointError):
    """A gradient went NaN/Inf; the optimizer state is left untouched."""


class TrainDataError(ValueError):
    """Empty train split, missing features, or an otherwise unusable stage."""


@dataclass
class TrainConfig:
    lr_low: float = 1e-5            # lightly-tuned group (adapter tensors)
    lr_high: float = 1e-4           # head tensors
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    max_epochs: int = 100
    newbob_factor: float = 0.5
    newbob_threshold: float = 0.0025
    patience: int = 10
    batch_size: int = 32
    seed: int = 0
    smoothing: float = 0.0
    att_dim: int = 128
    pooling: str = "mean_std"
    adapter: bool = False
    metric: str = "accuracy"        # "accuracy" (higher better) or "loss" (lower better)

    def __post_init__(self) -> None:
        if self.lr_low < 0 or self.lr_high < 0:
            raise ValueError("learning rates must be >= 0")
        if not 0.0 < self.newbob_factor < 1.0:
            raise ValueError(f"newbob_factor must be in (0, 1), got {self.newbob_factor}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.metric not in ("accuracy", "loss"):
            raise ValueError(f"metric must be 'accuracy' or 'loss', got {self.metric!r}")


@dataclass
class AdamState:
    t: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros(cls, params: HeadParameters) -> "AdamState":
        return cls(
            0,
            {n: np.zeros_like(a) for n, a in params.tensors()},
            {n: np.zeros_like(a) for n, a in params.tensors()},
        )


def adam_step(
    state: AdamState,
    params: HeadParameters,
    grads: HeadParameters,
    lr_low: float,
    lr_high: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> AdamState:
    """Standard bias-corrected Adam; adapter tensors use lr_low, the rest lr_high.

    Raises NonFiniteGradientError before mutating anything if a gradient is bad.
    """
    grad_list = grads.tensors()
    for name, g in grad_list:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in {name}")
    b1, b2 = betas
    state.t += 1
    t = state.t
    for (name, g), (_, p) in zip(grad_list, params.tensors()):
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        lr = lr_low if name in ADAPTER_PARAM_NAMES else lr_high
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


@dataclass
class NewBobScheduler:
    """Multiply the rates by `factor` whenever relative improvement over the best
    seen metric falls below `threshold`."""

    lr_low: float
    lr_high: float
    factor: float = 0.5
    threshold: float = 0.0025
    higher_is_better: bool = True
    best: float | None = None

    def update(self, metric: float) -> tuple[float, float]:
        if self.best is None:
            self.best = metric
            return self.lr_low, self.lr_high
        delta = metric - self.best if self.higher_is_better else self.best - metric
        denom = abs(self.best)
        improvement = delta / denom if denom > 0 else (np.inf if delta > 0 else 0.0)
        if improvement < self.threshold:
            self.lr_low *= self.factor
            self.lr_high *= self.factor
        if delta > 0:
            self.best = metric
        return self.lr_low, self.lr_high


def newbob_update(sched: NewBobScheduler, val_metric: float) -> tuple[float, float]:
    return sched.update(val_metric)


@dataclass
class EpochLog:
    epoch: int
    split: str
    loss: float
    accuracy: float
    lr_low: float
    lr_high: float

    def line(self) -> str:
        return (
            f"{self.epoch}, {self.split}, {self.loss:.6f}, {self.accuracy:.4f}, "
            f"{self.lr_low:.6e}, {self.lr_high:.6e}"
        )


def write_log(entries: Sequence[EpochLog], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(e.line() + "\n")


@dataclass
class TrainState:
    params: HeadParameters
    adam: AdamState
    epoch: int
    lr_low: float
    lr_high: float
    best_metric: float | None
    epochs_since_improvement: int
    seed: int


class FeatureStore:
    """utt_id -> (T, D) float32 matrix; directory-of-FEMB-files backend."""

    def __init__(self, directory: str | Path, cache: bool = True):
        self.directory = Path(directory)
        self._cache: dict[str, np.ndarray] | None = {} if cache else None

    def get(self, utt_id: str) -> np.ndarray:
        if self._cache is not None and utt_id in self._cache:
            return self._cache[utt_id]
        path = femb_path(self.directory, utt_id)
        if not path.exists():
            raise TrainDataError(f"missing feature file for {utt_id!r}: {path}")
        frames = read_femb(path).frames
        if self._cache is not None:
            self._cache[utt_id] = frames
        return frames


class MappingFeatureStore:
    def __init__(self, mapping: Mapping[str, np.ndarray]):
        self._mapping = mapping

    def get(self, utt_id: str) -> np.ndarray:
        try:
            return self._mapping[utt_id]
        except KeyError:
            raise TrainDataError(f"missing features for {utt_id!r}") from None


def evaluate(
    params: HeadParameters,
    records: Sequence[UtteranceRecord],
    store,
    label_index: Mapping[str, int],
    smoothing: float = 0.0,
) -> tuple[float, float]:
    """Mean NLL and accuracy (%) of `params` over `records`."""
    if not records:
        raise TrainDataError("cannot evaluate on an empty record list")
    total_loss = 0.0
    correct = 0
    for rec in records:
        out = forward(params, store.get(rec.utt_id))
        label = label_index[rec.dialect]
        loss, _ = nll_loss(out, label, smoothing)
        total_loss += loss
        if int(np.argmax(out.log_probs)) == label:
            correct += 1
    return total_loss / len(records), 100.0 * correct / len(records)


def _epoch_order(n: int, seed: int, epoch: int) -> list[int]:
    order = list(range(n))
    random.Random(f"{seed}:{epoch}").shuffle(order)
    return order


def fit(
    manifest: Manifest,
    store,
    cfg: TrainConfig,
    init_params: HeadParameters | TrainState | None = None,
    train_split: str = "train",
) -> tuple[TrainState, list[EpochLog]]:
    """Train the head on one split, validating on the manifest's validation split.

    Deterministic for a fixed seed (seeded shuffles, sequential gradient
    reduction).  Stops at max_epochs or once the validation metric has not
    improved for `patience` epochs, and returns the best-validation state, not
    the last one.  `init_params` warm-starts from earlier parameters (or a
    whole TrainState); optimizer moments always start fresh.  Each log entry
    records the split trained on, the mean training loss, the validation
    accuracy, and the current learning rates.
    """
    train_records = manifest.split_records(train_split)
    val_records = manifest.split_records("validation")
    if not train_records:
        raise TrainDataError(f"no records in split {train_split!r}")
    if not val_records:
        raise TrainDataError("no records in the validation split")
    label_index = {c: i for i, c in enumerate(manifest.registry.codes)}

    if isinstance(init_params, TrainState):
        init_params = init_params.params
    if init_params is None:
        dim = store.get(train_records[0].utt_id).shape[1]
        head_cfg = HeadConfig(
            dim, len(manifest.registry), cfg.att_dim, cfg.pooling, cfg.adapter
        )
        params = init_head(head_cfg, cfg.seed)
    else:
        params = init_params.copy()
        if params.config.n_classes != len(manifest.registry):
            raise TrainDataError(
                f"initial parameters expect {params.config.n_classes} classes, "
                f"manifest registry has {len(manifest.registry)}"
            )

    adam = AdamState.zeros(params)
    sched = NewBobScheduler(
        cfg.lr_low,
        cfg.lr_high,
        cfg.newbob_factor,
        cfg.newbob_threshold,
        higher_is_better=cfg.metric == "accuracy",
    )
    lr_low, lr_high = cfg.lr_low, cfg.lr_high
    higher = cfg.metric == "accuracy"

    best_metric: float | None = None
    best_state: TrainState | None = None
    since_improvement = 0
    entries: list[EpochLog] = []

    for epoch in range(1, cfg.max_epochs + 1):
        order = _epoch_order(len(train_records), cfg.seed, epoch)
        train_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grad_sum = params.zeros_like()
            for i in batch:
                rec = train_records[i]
                loss, grads, _ = backward(
                    params, store.get(rec.utt_id), label_index[rec.dialect], cfg.smoothing
                )
                train_loss += loss
                for (name, acc), (_, g) in zip(grad_sum.tensors(), grads.tensors()):
                    acc += g
            for _, acc in grad_sum.tensors():
                acc /= len(batch)
            adam_step(adam, params, grad_sum, lr_low, lr_high, cfg.adam_betas, cfg.adam_eps)
        train_loss /= len(train_records)

        val_loss, val_acc = evaluate(params, val_records, store, label_index, cfg.smoothing)
        metric = val_acc if cfg.metric == "accuracy" else val_loss
        lr_low, lr_high = sched.update(metric)

        improved = best_metric is None or (
            metric > best_metric if higher else metric < best_metric
        )
        if improved:
            best_metric = metric
            since_improvement = 0
            best_state = TrainState(
                params.copy(),
                AdamState(adam.t, {k: a.copy() for k, a in adam.m.items()},
                          {k: a.copy() for k, a in adam.v.items()}),
                epoch,
                lr_low,
                lr_high,
                best_metric,
                0,
                cfg.seed,
            )
        else:
            since_improvement += 1

        entries.append(EpochLog(epoch, train_split, train_loss, val_acc, lr_low, lr_high))
        if since_improvement >= cfg.patience:
            break

    assert best_state is not None
    best_state.epochs_since_improvement = since_improvement
    return best_state, entries


def carry_to_registry(
    params: HeadParameters, n_classes: int, seed: int
) -> HeadParameters:
    """Keep attention/adapter weights, re-initialize the classifier for a new
    label registry."""
    cfg = replace(params.config, n_classes=n_classes)
    fresh = init_head(cfg, seed)
    out = params.copy()
    out.config = cfg
    out.w_cls = fresh.w_cls
    out.b_cls = fresh.b_cls
    return out


def two_stage(
    base_manifest: Manifest,
    adapt_manifest: Manifest,
    store,
    cfg: TrainConfig,
) -> tuple[TrainState, list[EpochLog]]:
    """Stage 1 trains on the broad corpus; stage 2 adapts on the in-domain split.

    When the stage-2 registry differs, the classifier layer is re-initialized
    while pooling/attention parameters carry over.  An empty adaptation split
    returns the stage-1 state with a warning.
    """
    state1, log1 = fit(base_manifest, store, cfg, train_split="train")

    stage2_split = "adaptation" if adapt_manifest.split_records("adaptation") else "train"
    if not adapt_manifest.split_records(stage2_split):
        log.warning("adaptation stage has no records; returning the stage-1 model")
        return state1, log1

    params = state1.params
    if adapt_manifest.registry != base_manifest.registry:
        params = carry_to_registry(params, len(adapt_manifest.registry), cfg.seed)
    state2, log2 = fit(
        adapt_manifest, store, cfg, init_params=params, train_split=stage2_split
    )
    return state2, log1 + log2


def _pack_f64(x: float) -> bytes:
    return struct.pack("<d", x)


def save_state(state: TrainState, path: str | Path) -> None:
    """Full optimizer checkpoint: head block, Adam moments, scheduler scalars."""
    head_bytes = params_to_bytes(state.params)
    with Path(path).open("wb") as fh:
        fh.write(STATE_MAGIC)
        fh.write(struct.pack("<I", STATE_VERSION))
        fh.write(struct.pack("<I", len(head_bytes)))
        fh.write(head_bytes)
        fh.write(struct.pack("<Q", state.adam.t))
        for name, _ in state.params.tensors():
            fh.write(np.ascontiguousarray(state.adam.m[name], dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(state.adam.v[name], dtype="<f4").tobytes())
        fh.write(struct.pack("<I", state.epoch))
        fh.write(_pack_f64(state.lr_low))
        fh.write(_pack_f64(state.lr_high))
        fh.write(struct.pack("<B", 0 if state.best_metric is None else 1))
        fh.write(_pack_f64(state.best_metric if state.best_metric is not None else 0.0))
        fh.write(struct.pack("<I", state.epochs_since_improvement))
        fh.write(struct.pack("<q", state.seed))


def load_state(path: str | Path) -> TrainState:
    data = Path(path).read_bytes()
    if data[:4] != STATE_MAGIC:
        raise ValueError(f"{path}: bad trainer-state magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != STATE_VERSION:
        raise ValueError(f"{path}: unsupported trainer-state version {version}")
    (head_len,) = struct.unpack_from("<I", data, 8)
    offset = 12
    params = params_from_bytes(data[offset : offset + head_len], origin=str(path))
    offset += head_len
    (t,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    adam = AdamState.zeros(params)
    adam.t = t
    for name, arr in params.tensors():
        count = arr.size
        adam.m[name] = (
            np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            .reshape(arr.shape)
            .astype(np.float64)
        )
        offset += 4 * count
        adam.v[name] = (
            np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            .reshape(arr.shape)
            .astype(np.float64)
        )
        offset += 4 * count
    (epoch,) = struct.unpack_from("<I", data, offset)
    offset += 4
    (lr_low,) = struct.unpack_from("<d", data, offset)
    offset += 8
    (lr_high,) = struct.unpack_from("<d", data, offset)
    offset += 8
    (has_best,) = struct.unpack_from("<B", data, offset)
    offset += 1
    (best,) = struct.unpack_from("<d", data, offset)
    offset += 8
    (since,) = struct.unpack_from("<I", data, offset)
    offset += 4
    (seed,) = struct.unpack_from("<q", data, offset)
    offset += 8
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes in state file")
    return TrainState(
        params, adam, epoch, lr_low, lr_high, best if has_best else None, since, seed
    )
