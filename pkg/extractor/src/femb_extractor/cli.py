"""`femb-extract`: run manifest audio through a frozen encoder, write one FEMB
file per utterance plus an index listing."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from .audio import AudioError, load_audio_16k
from .encoder import ModelLoadError, available_models, load_encoder
from .femb import write_embedding
from .manifest import read_manifest

log = logging.getLogger("femb_extractor")


@dataclass
class ExtractorConfig:
    model_id: str = "sim-conv-v1"
    layer: int | None = None        # None = final encoder block
    device: str = "cpu"             # reference encoders are CPU-only
    batch_size: int = 8
    out_dir: str = "embeddings"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="femb-extract", description=__doc__)
    p.add_argument("--manifest", required=True, help="TSV utterance manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--model", default="sim-conv-v1",
                   help=f"encoder id ({', '.join(available_models())})")
    p.add_argument("--layer", default="final",
                   help="'final' or a 1-based encoder block index")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--device", default="cpu")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def extract(manifest_path: str | Path, cfg: ExtractorConfig) -> tuple[int, int]:
    """Write FEMB files and ``index.tsv``; returns (written, skipped) counts.

    The encoder is loaded before any output is touched, so a bad model id
    fails cleanly.  Per-file audio errors are logged and skipped.
    """
    encoder = load_encoder(cfg.model_id)
    entries = read_manifest(manifest_path)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    index_rows: list[tuple[str, str, int, int]] = []
    skipped = 0
    for start in range(0, len(entries), max(1, cfg.batch_size)):
        for entry in entries[start : start + max(1, cfg.batch_size)]:
            try:
                samples = load_audio_16k(entry.audio_path)
            except AudioError as exc:
                log.error("skipping %s: %s", entry.utt_id, exc)
                skipped += 1
                continue
            frames = encoder.encode(samples, cfg.layer)
            dest = out_dir / f"{entry.utt_id}.femb"
            write_embedding(frames, entry.utt_id, dest)
            index_rows.append((entry.utt_id, dest.name, frames.shape[0], frames.shape[1]))

    with (out_dir / "index.tsv").open("w", encoding="utf-8") as fh:
        for utt_id, name, t, d in index_rows:
            fh.write(f"{utt_id}\t{name}\t{t}\t{d}\n")
    return len(index_rows), skipped


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    layer = None
    if args.layer != "final":
        try:
            layer = int(args.layer)
        except ValueError:
            log.error("--layer must be 'final' or an integer, got %r", args.layer)
            return 64
    cfg = ExtractorConfig(
        model_id=args.model,
        layer=layer,
        device=args.device,
        batch_size=args.batch_size,
        out_dir=args.out,
    )
    try:
        written, skipped = extract(args.manifest, cfg)
    except ModelLoadError as exc:
        log.error("%s", exc)
        return 3
    except (ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2
    print(f"extract: {written} written, {skipped} skipped -> {cfg.out_dir}")
    return 2 if skipped else 0


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
