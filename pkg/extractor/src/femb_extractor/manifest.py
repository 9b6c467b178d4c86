"""Reader for the toolkit's TSV manifest interchange format.

One record per line:
``utt_id<TAB>audio_path<TAB>dialect<TAB>duration_s<TAB>split<TAB>transcript?``
The adapter only needs utt_id and audio_path; relative audio paths resolve
against the manifest's directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    audio_path: Path


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    path = Path(path)
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) < 5:
                raise ValueError(f"{path}:{lineno}: expected at least 5 tab-separated fields")
            utt_id, audio = fields[0], fields[1]
            if not utt_id:
                raise ValueError(f"{path}:{lineno}: empty utt_id")
            if utt_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate utt_id {utt_id!r}")
            seen.add(utt_id)
            audio_path = Path(audio)
            if not audio_path.is_absolute():
                audio_path = path.parent / audio_path
            entries.append(ManifestEntry(utt_id, audio_path))
    return entries
