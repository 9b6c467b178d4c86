"""Closed-set dialect-ID metrics: accuracy, confusion matrices, LRE average cost."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

POSTERIOR_SUM_TOL = 1e-6


class ScoreError(ValueError):
    """Malformed or inconsistent trial scores."""


@dataclass
class TrialScores:
    utt_ids: list[str]
    log_posteriors: np.ndarray    # (N, C), natural log, rows exp-sum to 1
    labels: np.ndarray            # (N,) int class indices
    registry: tuple[str, ...]     # C dialect codes

    def __post_init__(self) -> None:
        self.log_posteriors = np.asarray(self.log_posteriors, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n, c = self.log_posteriors.shape
        if len(self.utt_ids) != n or len(self.labels) != n:
            raise ScoreError("utt_ids, labels and score rows must agree in length")
        if len(self.registry) != c:
            raise ScoreError(f"{c} score columns but {len(self.registry)} registry codes")
        if n == 0:
            raise ScoreError("empty trial list")
        sums = np.exp(self.log_posteriors).sum(axis=1)
        bad = np.abs(sums - 1.0) > POSTERIOR_SUM_TOL
        if bad.any():
            i = int(np.argmax(bad))
            raise ScoreError(
                f"trial {self.utt_ids[i]!r}: posteriors sum to {sums[i]:.8f}, expected 1"
            )
        if (self.labels < 0).any() or (self.labels >= c).any():
            raise ScoreError("label index out of range")

    @property
    def n_classes(self) -> int:
        return self.log_posteriors.shape[1]

    def predictions(self) -> np.ndarray:
        # argmax ties break to the lowest class index
        return np.argmax(self.log_posteriors, axis=1)


def confusion(ts: TrialScores) -> np.ndarray:
    """(C, C) integer counts; rows = true label, columns = argmax prediction."""
    c = ts.n_classes
    cm = np.zeros((c, c), dtype=np.int64)
    for truth, pred in zip(ts.labels, ts.predictions()):
        cm[truth, pred] += 1
    return cm


def accuracy(cm: np.ndarray) -> float:
    """Percentage of trials on the diagonal."""
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return 100.0 * float(np.trace(cm)) / float(total)


def normalize_confusion(
    cm: np.ndarray, axis: str = "row", registry: Sequence[str] | None = None
) -> np.ndarray:
    """Percentages per row (recall view) or per column (precision view)."""
    cm = np.asarray(cm, dtype=np.float64)
    if axis not in ("row", "column"):
        raise ValueError(f"axis must be 'row' or 'column', got {axis!r}")
    sums = cm.sum(axis=1) if axis == "row" else cm.sum(axis=0)
    if (sums == 0).any():
        i = int(np.argmax(sums == 0))
        name = registry[i] if registry else f"index {i}"
        raise ValueError(f"cannot {axis}-normalize: class {name} has no trials on that axis")
    return 100.0 * (cm / sums[:, None] if axis == "row" else cm / sums[None, :])


@dataclass
class LreCostParams:
    p_targets: tuple[float, ...] = (0.5, 0.1)
    c_miss: float = 1.0
    c_fa: float = 1.0
    decision_rule: str = "argmax"     # "argmax" or "threshold"

    def __post_init__(self) -> None:
        if not self.p_targets or any(not 0.0 < p < 1.0 for p in self.p_targets):
            raise ValueError(f"priors must lie in (0, 1), got {self.p_targets}")
        if self.decision_rule not in ("argmax", "threshold"):
            raise ValueError(f"unknown decision rule {self.decision_rule!r}")


def cost_from_decisions(
    labels: np.ndarray,
    accept: np.ndarray,
    p_target: float,
    c_miss: float = 1.0,
    c_fa: float = 1.0,
) -> float:
    """Detection cost for one prior given per-trial accept decisions.

        C(P_t) = (1/C) * sum_L [ P_t * C_miss * P_miss(L)
                  + (1 - P_t) * C_fa / (C - 1) * sum_{L' != L} P_fa(L, L') ]

    `accept[n, L]` says trial n was accepted as target class L; every class
    must have at least one trial or its miss rate is undefined.
    """
    labels = np.asarray(labels)
    accept = np.asarray(accept, dtype=bool)
    c = accept.shape[1]
    counts = np.bincount(labels, minlength=c)
    if (counts == 0).any():
        raise ValueError(
            f"classes with zero trials (miss rate undefined): {np.flatnonzero(counts == 0).tolist()}"
        )
    total = 0.0
    for target in range(c):
        is_target = labels == target
        p_miss = 1.0 - accept[is_target, target].mean()
        fa_sum = 0.0
        for other in range(c):
            if other == target:
                continue
            fa_sum += accept[labels == other, target].mean()
        total += p_target * c_miss * p_miss + ((1.0 - p_target) * c_fa / (c - 1)) * fa_sum
    return total / c


def lre_cost(ts: TrialScores, params: LreCostParams | None = None) -> float:
    """Average detection cost over target classes and priors (see
    cost_from_decisions for the per-prior formula).

    Under the argmax rule a trial is accepted for L iff argmax = L; under the
    threshold rule it is accepted iff the posterior log-odds for L reach
    log((1 - P_t) / P_t).
    """
    params = params or LreCostParams()
    c = ts.n_classes
    if c < 2:
        raise ValueError("average cost needs at least 2 classes")
    counts = np.bincount(ts.labels, minlength=c)
    if (counts == 0).any():
        empty = [ts.registry[i] for i in np.flatnonzero(counts == 0)]
        raise ValueError(f"classes with zero trials (miss rate undefined): {empty}")

    costs = []
    for p_t in params.p_targets:
        if params.decision_rule == "argmax":
            preds = ts.predictions()
            accept = np.zeros((len(ts.labels), c), dtype=bool)
            accept[np.arange(len(preds)), preds] = True
        else:
            with np.errstate(divide="ignore"):
                post = np.minimum(np.exp(ts.log_posteriors), 1.0)
                llr = ts.log_posteriors - np.log1p(-post)
            accept = llr >= np.log((1.0 - p_t) / p_t)
        costs.append(cost_from_decisions(ts.labels, accept, p_t, params.c_miss, params.c_fa))
    return float(np.mean(costs))


def write_scores(ts: TrialScores, path: str | Path) -> None:
    """TSV: header `utt_id label <codes...>`, rows of natural-log posteriors."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("utt_id\tlabel\t" + "\t".join(ts.registry) + "\n")
        for i, utt in enumerate(ts.utt_ids):
            row = "\t".join(repr(float(v)) for v in ts.log_posteriors[i])
            fh.write(f"{utt}\t{ts.registry[ts.labels[i]]}\t{row}\n")


def read_scores(path: str | Path) -> TrialScores:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if len(header) < 4 or header[:2] != ["utt_id", "label"]:
            raise ScoreError(f"{path}: bad score header {header[:2]}")
        registry = tuple(header[2:])
        index = {c: i for i, c in enumerate(registry)}
        utt_ids: list[str] = []
        labels: list[int] = []
        rows: list[list[float]] = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 2 + len(registry):
                raise ScoreError(
                    f"{path}:{lineno}: expected {2 + len(registry)} fields, got {len(fields)}"
                )
            if fields[1] not in index:
                raise ScoreError(f"{path}:{lineno}: unknown label {fields[1]!r}")
            utt_ids.append(fields[0])
            labels.append(index[fields[1]])
            try:
                rows.append([float(v) for v in fields[2:]])
            except ValueError:
                raise ScoreError(f"{path}:{lineno}: non-numeric score") from None
    if not rows:
        raise ScoreError(f"{path}: no trials in score file")
    return TrialScores(utt_ids, np.array(rows), np.array(labels), registry)


def scores_from_confusion(
    cm: np.ndarray, registry: Sequence[str], peak: float = 0.9
) -> TrialScores:
    """Synthesize one peaked-posterior trial per confusion count (fixture helper)."""
    cm = np.asarray(cm)
    c = cm.shape[0]
    rest = (1.0 - peak) / (c - 1)
    utt_ids, labels, rows = [], [], []
    k = 0
    for i in range(c):
        for j in range(c):
            for _ in range(int(cm[i, j])):
                post = np.full(c, rest)
                post[j] = peak
                utt_ids.append(f"t{k:06d}")
                labels.append(i)
                rows.append(np.log(post))
                k += 1
    return TrialScores(utt_ids, np.array(rows), np.array(labels), tuple(registry))
