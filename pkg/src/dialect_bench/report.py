"""Report rendering: confusion CSV/SVG heatmap, per-dialect ASR tables."""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .metrics_adi import normalize_confusion

_CELL = 64
_MARGIN = 90


def confusion_csv(cm: np.ndarray, registry: Sequence[str]) -> str:
    lines = ["true\\pred," + ",".join(registry)]
    for i, code in enumerate(registry):
        lines.append(code + "," + ",".join(str(int(v)) for v in cm[i]))
    return "\n".join(lines) + "\n"


def confusion_svg(cm: np.ndarray, registry: Sequence[str], axis: str = "column") -> str:
    """Heatmap with true labels as rows and predictions as columns; each cell
    shows the raw count, the diagonal additionally the axis-normalized percent."""
    cm = np.asarray(cm)
    pct = normalize_confusion(cm, axis=axis, registry=registry)
    c = cm.shape[0]
    width = _MARGIN + c * _CELL + 20
    height = _MARGIN + c * _CELL + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        "<style>text{font-family:sans-serif;font-size:12px}.lab{font-size:13px;font-weight:bold}</style>",
        f'<text class="lab" x="{_MARGIN + c * _CELL / 2}" y="{height - 4}" '
        f'text-anchor="middle">Predicted label</text>',
        f'<text class="lab" transform="translate(14,{_MARGIN + c * _CELL / 2}) rotate(-90)" '
        f'text-anchor="middle">True label</text>',
    ]
    for j, code in enumerate(registry):
        x = _MARGIN + j * _CELL + _CELL / 2
        parts.append(
            f'<text x="{x}" y="{_MARGIN + c * _CELL + 16}" text-anchor="middle">{escape(code)}</text>'
        )
    for i, code in enumerate(registry):
        y = _MARGIN + i * _CELL + _CELL / 2
        parts.append(
            f'<text x="{_MARGIN - 6}" y="{y + 4}" text-anchor="end">{escape(code)}</text>'
        )
    for i in range(c):
        for j in range(c):
            p = pct[i, j]
            shade = int(round(255 * (1.0 - p / 100.0)))
            text_col = "#ffffff" if p >= 50 else "#000000"
            x = _MARGIN + j * _CELL
            y = _MARGIN + i * _CELL
            parts.append(
                f'<rect x="{x}" y="{y}" width="{_CELL}" height="{_CELL}" '
                f'fill="rgb({shade},{shade},{shade})" stroke="#000000"/>'
            )
            label = f"{int(cm[i, j])}"
            if i == j:
                parts.append(
                    f'<text x="{x + _CELL / 2}" y="{y + _CELL / 2 - 2}" text-anchor="middle" '
                    f'fill="{text_col}">{label}</text>'
                )
                parts.append(
                    f'<text x="{x + _CELL / 2}" y="{y + _CELL / 2 + 14}" text-anchor="middle" '
                    f'fill="{text_col}">({p:.0f}%)</text>'
                )
            else:
                parts.append(
                    f'<text x="{x + _CELL / 2}" y="{y + _CELL / 2 + 4}" text-anchor="middle" '
                    f'fill="{text_col}">{label}</text>'
                )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def asr_csv(rows: Sequence[Mapping[str, object]]) -> str:
    """Per-dialect WER/CER table with the word-level S/D/I breakdown plus a
    final unweighted MACRO row."""
    header = "dialect,wer,cer,word_sub,word_del,word_ins,word_ref_len"
    lines = [header]
    for row in rows:
        lines.append(
            f"{row['dialect']},{row['wer']:.2f},{row['cer']:.2f},"
            f"{row['word_sub']},{row['word_del']},{row['word_ins']},{row['word_ref_len']}"
        )
    return "\n".join(lines) + "\n"


def adi_markdown(
    acc: float,
    cost: float,
    cm: np.ndarray,
    registry: Sequence[str],
    top_k: int = 5,
) -> str:
    """Compact scoring summary with the most frequent off-diagonal confusions."""
    cm = np.asarray(cm)
    pairs = [
        (int(cm[i, j]), registry[i], registry[j])
        for i in range(cm.shape[0])
        for j in range(cm.shape[1])
        if i != j and cm[i, j] > 0
    ]
    pairs.sort(reverse=True)
    lines = [
        "# Dialect identification report",
        "",
        f"- trials: {int(cm.sum())}",
        f"- accuracy: {acc:.2f}%",
        f"- average detection cost: {cost:.4f}",
        "",
        "## Top confusions (true -> predicted)",
        "",
    ]
    for count, t, p in pairs[:top_k]:
        lines.append(f"- {t} -> {p}: {count}")
    if not pairs:
        lines.append("- none")
    return "\n".join(lines) + "\n"
