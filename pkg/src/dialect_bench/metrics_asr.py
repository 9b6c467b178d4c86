"""WER/CER scoring: Levenshtein alignment, text normalization, macro averaging."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

_ARABIC_DIACRITICS = frozenset(
    [chr(c) for c in range(0x064B, 0x0653)] + ["ٰ", "ـ"]
)
_ALEF_VARIANTS = {"أ": "ا", "إ": "ا", "آ": "ا", "ٱ": "ا"}
_YA_VARIANTS = {"ى": "ي"}


@dataclass(slots=True)
class AlignmentResult:
    substitutions: int
    deletions: int
    insertions: int
    matches: int
    ref_len: int
    alignment: list[tuple[str, str | None, str | None]]

    @property
    def distance(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def align(ref: Sequence[str], hyp: Sequence[str]) -> AlignmentResult:
    """Unit-cost Levenshtein alignment of two token sequences.

    Backtrace ties resolve as match > substitution > deletion > insertion,
    which fixes the alignment without affecting the distance.
    """
    n, m = len(ref), len(hyp)
    # full DP table, row-major flat list; dp[i][j] = dp[i*(m+1)+j]
    width = m + 1
    dp = list(range(width))
    rows = [dp]
    for i in range(1, n + 1):
        prev = rows[i - 1]
        cur = [i] + [0] * m
        r = ref[i - 1]
        for j in range(1, width):
            a = prev[j - 1] + (r != hyp[j - 1])
            b = prev[j] + 1
            if b < a:
                a = b
            b = cur[j - 1] + 1
            if b < a:
                a = b
            cur[j] = a
        rows.append(cur)

    ops: list[tuple[str, str | None, str | None]] = []
    subs = dels = ins = hits = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = rows[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and here == rows[i - 1][j - 1]:
            ops.append(("match", ref[i - 1], hyp[j - 1]))
            hits += 1
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and here == rows[i - 1][j - 1] + 1:
            ops.append(("sub", ref[i - 1], hyp[j - 1]))
            subs += 1
            i -= 1
            j -= 1
        elif i > 0 and here == rows[i - 1][j] + 1:
            ops.append(("del", ref[i - 1], None))
            dels += 1
            i -= 1
        else:
            ops.append(("ins", None, hyp[j - 1]))
            ins += 1
            j -= 1
    ops.reverse()
    return AlignmentResult(subs, dels, ins, hits, n, ops)


@dataclass(frozen=True)
class NormalizationPolicy:
    strip_punctuation: bool = True
    remove_diacritics: bool = False
    normalize_alef_ya: bool = False
    cer_include_spaces: bool = False


def normalize_text(text: str, policy: NormalizationPolicy | None = None) -> str:
    """NFC, optional punctuation/diacritic/letter-variant folding, whitespace collapse.

    Idempotent: normalize(normalize(x)) == normalize(x).
    """
    policy = policy or NormalizationPolicy()
    text = unicodedata.normalize("NFC", text)
    out = []
    for ch in text:
        if policy.strip_punctuation and unicodedata.category(ch).startswith("P"):
            out.append(" ")
            continue
        if policy.remove_diacritics and ch in _ARABIC_DIACRITICS:
            continue
        if policy.normalize_alef_ya:
            ch = _ALEF_VARIANTS.get(ch, ch)
            ch = _YA_VARIANTS.get(ch, ch)
        out.append(ch)
    return " ".join("".join(out).split())


def tokenize(text: str, unit: str, policy: NormalizationPolicy | None = None) -> list[str]:
    """Word tokens split on whitespace; char tokens are Unicode scalar values
    (spaces excluded unless the policy keeps them)."""
    policy = policy or NormalizationPolicy()
    norm = normalize_text(text, policy)
    if unit == "word":
        return norm.split()
    if unit == "char":
        return list(norm) if policy.cer_include_spaces else [c for c in norm if c != " "]
    raise ValueError(f"unit must be 'word' or 'char', got {unit!r}")


@dataclass
class ErrorTotals:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    ref_len: int = 0

    @property
    def rate(self) -> float:
        if self.ref_len == 0:
            raise ValueError("total reference length is zero; error rate undefined")
        return 100.0 * (self.substitutions + self.deletions + self.insertions) / self.ref_len


def corpus_totals(
    pairs: Iterable[tuple[str, str]],
    unit: str = "word",
    policy: NormalizationPolicy | None = None,
) -> ErrorTotals:
    totals = ErrorTotals()
    n = 0
    for ref, hyp in pairs:
        res = align(tokenize(ref, unit, policy), tokenize(hyp, unit, policy))
        totals.substitutions += res.substitutions
        totals.deletions += res.deletions
        totals.insertions += res.insertions
        totals.ref_len += res.ref_len
        n += 1
    if n == 0:
        raise ValueError("no reference/hypothesis pairs to score")
    return totals


def corpus_error_rate(
    pairs: Iterable[tuple[str, str]],
    unit: str = "word",
    policy: NormalizationPolicy | None = None,
) -> float:
    """Corpus-pooled rate: 100 * sum(S + D + I) / sum(ref length).

    Pooled over all pairs, not averaged per utterance; may exceed 100% when
    insertions dominate.
    """
    return corpus_totals(pairs, unit, policy).rate


def macro_average(per_dialect: Mapping[str, float]) -> float:
    """Unweighted mean of per-dialect rates."""
    if not per_dialect:
        raise ValueError("cannot macro-average an empty map")
    return float(sum(per_dialect.values()) / len(per_dialect))


def read_trn(path: str | Path) -> dict[str, str]:
    """`utt_id<TAB>text` per line, UTF-8, NFC-normalized on load."""
    out: dict[str, str] = {}
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t", 1)
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected `utt_id<TAB>text`")
            utt, text = parts
            if utt in out:
                raise ValueError(f"{path}:{lineno}: duplicate utt_id {utt!r}")
            out[utt] = unicodedata.normalize("NFC", text)
    return out
