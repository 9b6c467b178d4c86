"""Dataset manifests: dialect registries, split handling, stratified subsetting."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

SPLITS = ("train", "adaptation", "validation", "test")

_NADI_DIALECTS = (
    ("ALG", "Algeria"),
    ("EGY", "Egypt"),
    ("JOR", "Jordan"),
    ("MAU", "Mauritania"),
    ("MOR", "Morocco"),
    ("PAL", "Palestine"),
    ("UAE", "UAE"),
    ("YEM", "Yemen"),
)


class ManifestError(ValueError):
    """Raised for malformed manifest files or invariant violations."""


@dataclass(frozen=True)
class DialectLabel:
    code: str
    display_name: str

    def __post_init__(self) -> None:
        if not self.code or len(self.code) > 8:
            raise ManifestError(f"dialect code must be 1..8 chars, got {self.code!r}")
        if self.code != self.code.upper() or any(c.isspace() for c in self.code):
            raise ManifestError(f"dialect code must be uppercase without spaces: {self.code!r}")


class Registry:
    """Ordered set of dialect labels; class index = position in the registry."""

    def __init__(self, labels: Iterable[DialectLabel]):
        labels = tuple(labels)
        codes = [lab.code for lab in labels]
        if len(set(codes)) != len(codes):
            dupes = sorted({c for c in codes if codes.count(c) > 1})
            raise ManifestError(f"duplicate dialect codes in registry: {dupes}")
        if len(labels) < 2:
            raise ManifestError(f"registry needs at least 2 dialects, got {len(labels)}")
        self.labels = labels
        self._index = {lab.code: i for i, lab in enumerate(labels)}

    @classmethod
    def from_codes(cls, codes: Iterable[str]) -> "Registry":
        return cls(DialectLabel(c, c) for c in codes)

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(lab.code for lab in self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, code: str) -> bool:
        return code in self._index

    def index(self, code: str) -> int:
        try:
            return self._index[code]
        except KeyError:
            raise ManifestError(f"unknown dialect code {code!r}") from None

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Registry) and self.codes == other.codes

    def __repr__(self) -> str:
        return f"Registry({', '.join(self.codes)})"


def nadi_registry() -> Registry:
    """The eight NADI 2025 country-level dialects."""
    return Registry(DialectLabel(c, n) for c, n in _NADI_DIALECTS)


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    audio_path: str
    dialect: str
    duration_s: float
    split: str
    transcript: str | None = None

    def __post_init__(self) -> None:
        if not self.utt_id or any(c in self.utt_id for c in "\t\n/\\"):
            raise ManifestError(f"bad utt_id {self.utt_id!r}: empty or contains tab/newline/slash")
        if not (self.duration_s > 0):
            raise ManifestError(f"{self.utt_id}: duration_s must be > 0, got {self.duration_s}")
        if self.split not in SPLITS:
            raise ManifestError(f"{self.utt_id}: unknown split {self.split!r}, expected one of {SPLITS}")
        if self.transcript is not None and any(c in self.transcript for c in "\t\n"):
            raise ManifestError(f"{self.utt_id}: transcript may not contain tab or newline")


@dataclass(frozen=True)
class Manifest:
    registry: Registry
    records: tuple[UtteranceRecord, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        for rec in self.records:
            if rec.utt_id in seen:
                raise ManifestError(f"duplicate utt_id {rec.utt_id!r}")
            seen.add(rec.utt_id)
            if rec.dialect not in self.registry:
                raise ManifestError(
                    f"{rec.utt_id}: dialect {rec.dialect!r} not in registry {self.registry.codes}"
                )

    def __len__(self) -> int:
        return len(self.records)

    def split_records(self, split: str) -> list[UtteranceRecord]:
        if split not in SPLITS:
            raise ManifestError(f"unknown split {split!r}, expected one of {SPLITS}")
        return [r for r in self.records if r.split == split]


def _parse_line(line: str, lineno: int) -> UtteranceRecord:
    fields = line.rstrip("\n").split("\t")
    if len(fields) not in (5, 6):
        raise ManifestError(
            f"line {lineno}: expected 5 or 6 tab-separated fields, got {len(fields)}"
        )
    utt_id, audio_path, dialect, dur_text, split = fields[:5]
    transcript = fields[5] if len(fields) == 6 and fields[5] != "" else None
    try:
        duration = float(dur_text)
    except ValueError:
        raise ManifestError(f"line {lineno}: bad duration {dur_text!r}") from None
    try:
        return UtteranceRecord(utt_id, audio_path, dialect, duration, split, transcript)
    except ManifestError as exc:
        raise ManifestError(f"line {lineno}: {exc}") from None


def load_manifest(path: str | Path, registry: Registry | None = None) -> Manifest:
    """Load a TSV manifest; the registry is inferred from the records when not given."""
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(_parse_line(line, lineno))
    if registry is None:
        codes = sorted({r.dialect for r in records})
        if len(codes) < 2:
            raise ManifestError(
                f"{path}: cannot infer a registry from {len(codes)} dialect(s); pass one explicitly"
            )
        registry = Registry.from_codes(codes)
    return Manifest(registry, tuple(records))


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for r in manifest.records:
            fh.write(
                f"{r.utt_id}\t{r.audio_path}\t{r.dialect}\t{r.duration_s!r}\t{r.split}"
                f"\t{r.transcript or ''}\n"
            )


def duration_summary(manifest: Manifest, split: str) -> dict[str, float]:
    """Hours per dialect for one split; dialects without records are omitted."""
    totals: dict[str, float] = {}
    for rec in manifest.split_records(split):
        totals[rec.dialect] = totals.get(rec.dialect, 0.0) + rec.duration_s
    # registry order, hours
    return {c: totals[c] / 3600.0 for c in manifest.registry.codes if c in totals}


def stratified_subset(
    manifest: Manifest, split: str, cap_hours: float, seed: int
) -> Manifest:
    """Cap one split at `cap_hours` per dialect; records in other splits pass through.

    Per dialect the records are visited in a seeded-shuffle order and accumulated
    greedily, stopping before the first record that would push the total past the
    cap.  Audio is never truncated.  Selected records keep their original manifest
    order, which makes the operation idempotent.
    """
    if not cap_hours > 0:
        raise ValueError(f"cap_hours must be > 0, got {cap_hours}")
    if split not in SPLITS:
        raise ManifestError(f"unknown split {split!r}, expected one of {SPLITS}")
    cap_s = cap_hours * 3600.0
    keep: set[str] = set()
    for code in manifest.registry.codes:
        recs = [r for r in manifest.records if r.split == split and r.dialect == code]
        order = list(range(len(recs)))
        random.Random(f"{seed}:{code}").shuffle(order)
        total = 0.0
        for i in order:
            if total + recs[i].duration_s > cap_s:
                break
            total += recs[i].duration_s
            keep.add(recs[i].utt_id)
    kept = tuple(r for r in manifest.records if r.split != split or r.utt_id in keep)
    return Manifest(manifest.registry, kept)


def with_suffixed_id(rec: UtteranceRecord, suffix: str, duration_s: float | None = None) -> UtteranceRecord:
    """Derived record for an augmented copy (e.g. ``u1`` -> ``u1#aug0``)."""
    return replace(
        rec,
        utt_id=f"{rec.utt_id}{suffix}",
        duration_s=rec.duration_s if duration_s is None else duration_s,
    )


def total_hours(summary: Mapping[str, float]) -> float:
    return float(sum(summary.values()))
