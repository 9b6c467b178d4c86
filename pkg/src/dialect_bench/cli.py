"""Command-line surface: manifest tooling, feature extraction, augmentation,
training, and scoring.  Exit codes: 0 ok, 2 data/validation error, 64 usage,
70 internal numeric error."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import augment as aug
from . import corpus, dsp, embedio, head, metrics_adi, metrics_asr, report, trainer
from .config import ConfigError, ExperimentConfig

log = logging.getLogger("dialect_bench")

EXIT_OK = 0
EXIT_DATA = 2
EXIT_USAGE = 64
EXIT_NUMERIC = 70


class CliError(Exception):
    """Data/validation failure surfaced to the user with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_jobs() -> int:
    env = os.environ.get("DIALECT_BENCH_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (overrides the config's seeds)")
    common.add_argument("--jobs", type=int, default=None, help="worker pool size "
                        "(default: DIALECT_BENCH_JOBS env var or logical cores)")
    common.add_argument("--config", type=str, default=None, help="experiment config file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="dialect-bench", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    man = sub.add_parser("manifest", help="build/summarize/stratify manifests")
    mansub = man.add_subparsers(dest="manifest_command", required=True)

    mb = mansub.add_parser("build", parents=[common],
                           help="scan <dialect>/<split>/*.wav into a manifest")
    mb.add_argument("--audio-dir", required=True)
    mb.add_argument("--out", required=True)
    mb.add_argument("--registry", default=None, help="comma-separated dialect codes")

    ms = mansub.add_parser("summarize", parents=[common], help="per-dialect hours per split")
    ms.add_argument("--manifest", required=True)
    ms.add_argument("--split", default=None, choices=corpus.SPLITS)

    mst = mansub.add_parser("stratify", parents=[common],
                            help="cap one split at N hours per dialect")
    mst.add_argument("--manifest", required=True)
    mst.add_argument("--cap-hours", type=float, required=True)
    mst.add_argument("--split", default="train", choices=corpus.SPLITS)
    mst.add_argument("--out", required=True)

    fz = sub.add_parser("featurize", parents=[common],
                        help="log-mel features for every manifest record")
    fz.add_argument("--manifest", required=True)
    fz.add_argument("--out-dir", required=True)
    fz.add_argument("--force", action="store_true")

    ag = sub.add_parser("augment", parents=[common],
                        help="augmented feature copies for train splits")
    ag.add_argument("--manifest", required=True)
    ag.add_argument("--out-dir", required=True)
    ag.add_argument("--copies", type=int, default=1)
    ag.add_argument("--noise-list", default=None, help="text file with one noise WAV path per line")
    ag.add_argument("--force", action="store_true")

    tr = sub.add_parser("train", parents=[common], help="fit the head (optionally two-stage)")
    tr.add_argument("--stage1", required=True, help="stage-1 manifest")
    tr.add_argument("--stage2", default=None, help="adaptation manifest")
    tr.add_argument("--features", required=True)
    tr.add_argument("--out-dir", required=True)

    inf = sub.add_parser("infer", parents=[common],
                         help="score a manifest split with a checkpoint")
    inf.add_argument("--checkpoint", required=True)
    inf.add_argument("--manifest", required=True)
    inf.add_argument("--split", default="validation", choices=corpus.SPLITS)
    inf.add_argument("--features", required=True)
    inf.add_argument("--out", required=True)

    sa = sub.add_parser("score-adi", parents=[common],
                        help="accuracy, LRE cost, confusion matrix")
    sa.add_argument("--scores", required=True)
    sa.add_argument("--manifest", default=None, help="cross-check the registry")
    sa.add_argument("--normalize", default="column", choices=["row", "column"])
    sa.add_argument("--out-dir", required=True)

    ss = sub.add_parser("score-asr", parents=[common],
                        help="per-dialect WER/CER with macro average")
    ss.add_argument("--manifest", required=True)
    ss.add_argument("--ref", required=True, help="utt_id<TAB>reference text")
    ss.add_argument("--hyp", action="append", default=[],
                    help="DIALECT=path hypothesis file (repeatable), or a single "
                         "path used for every dialect")
    ss.add_argument("--out-dir", required=True)

    rp = sub.add_parser("report", parents=[common], help="markdown summary from a score file")
    rp.add_argument("--scores", required=True)
    rp.add_argument("--out-dir", required=True)

    return p


def _load_config(args) -> ExperimentConfig:
    if args.config:
        return ExperimentConfig.load(args.config)
    return ExperimentConfig()


def _resolve_audio(rec: corpus.UtteranceRecord, manifest_path: Path) -> Path:
    p = Path(rec.audio_path)
    return p if p.is_absolute() else manifest_path.parent / p


def _cmd_manifest_build(args) -> int:
    root = Path(args.audio_dir)
    if not root.is_dir():
        raise CliError(f"audio dir {root} does not exist")
    records = []
    for wav in sorted(root.glob("*/*/*.wav")):
        dialect, split = wav.parent.parent.name, wav.parent.name
        w = dsp.read_wav(wav)
        records.append(
            corpus.UtteranceRecord(
                utt_id=f"{dialect}-{split}-{wav.stem}",
                audio_path=str(wav.resolve()),
                dialect=dialect,
                duration_s=len(w) / w.sample_rate,
                split=split,
            )
        )
    if args.registry:
        registry = corpus.Registry.from_codes(args.registry.split(","))
    else:
        codes = sorted({r.dialect for r in records})
        if len(codes) < 2:
            raise CliError("found fewer than 2 dialect directories; pass --registry")
        registry = corpus.Registry.from_codes(codes)
    manifest = corpus.Manifest(registry, tuple(records))
    corpus.save_manifest(manifest, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def _cmd_manifest_summarize(args) -> int:
    manifest = corpus.load_manifest(args.manifest)
    splits = [args.split] if args.split else list(corpus.SPLITS)
    for split in splits:
        summary = corpus.duration_summary(manifest, split)
        if not summary:
            continue
        print(f"[{split}]")
        for code, hours in summary.items():
            print(f"  {code:8s} {hours:8.2f} h")
        print(f"  {'total':8s} {corpus.total_hours(summary):8.2f} h")
    return EXIT_OK


def _cmd_manifest_stratify(args) -> int:
    src = Path(args.manifest)
    if not src.exists():
        raise CliError(f"manifest {src} does not exist")
    if not any(line.strip() for line in src.read_text(encoding="utf-8").splitlines()):
        Path(args.out).write_text("", encoding="utf-8")
        print("empty manifest; wrote empty output")
        return EXIT_OK
    manifest = corpus.load_manifest(src)
    seed = 0 if args.seed is None else args.seed
    subset = corpus.stratified_subset(manifest, args.split, args.cap_hours, seed)
    corpus.save_manifest(subset, args.out)
    kept = len(subset.split_records(args.split))
    print(f"kept {kept} {args.split} records (cap {args.cap_hours} h/dialect) -> {args.out}")
    return EXIT_OK


def _featurize_one(rec, manifest_path, out_dir, cfg, force):
    dest = embedio.femb_path(out_dir, rec.utt_id)
    if dest.exists() and not force:
        return "skipped"
    w = dsp.read_wav(_resolve_audio(rec, manifest_path))
    if w.sample_rate != cfg.frontend.sample_rate:
        w = dsp.resample(w, cfg.frontend.sample_rate)
    mel = dsp.log_mel(w, cfg.frontend)
    embedio.write_femb(embedio.EmbeddingSequence(mel.frames, rec.utt_id), dest)
    return "written"


def _run_pool(jobs, tasks):
    """Run tasks through a bounded pool, returning results in task order."""
    if jobs <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def _cmd_featurize(args, cfg: ExperimentConfig) -> int:
    manifest_path = Path(args.manifest)
    manifest = corpus.load_manifest(manifest_path)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = args.jobs if args.jobs else _default_jobs()

    outcomes: list[str | Exception] = []

    def make_task(rec):
        def task():
            try:
                return _featurize_one(rec, manifest_path, out_dir, cfg, args.force)
            except (dsp.WavFormatError, FileNotFoundError, OSError, ValueError) as exc:
                return exc
        return task

    outcomes = _run_pool(jobs, [make_task(r) for r in manifest.records])
    written = sum(1 for o in outcomes if o == "written")
    skipped = sum(1 for o in outcomes if o == "skipped")
    failures = [(r.utt_id, o) for r, o in zip(manifest.records, outcomes) if isinstance(o, Exception)]
    for utt, exc in failures:
        log.error("%s: %s", utt, exc)
    print(f"featurize: {written} written, {skipped} skipped, {len(failures)} failed")
    return EXIT_DATA if failures else EXIT_OK


def _cmd_augment(args, cfg: ExperimentConfig) -> int:
    manifest_path = Path(args.manifest)
    manifest = corpus.load_manifest(manifest_path)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = cfg.augment
    if args.seed is not None:
        spec.seed = args.seed

    noises: list[Path] = []
    if args.noise_list:
        noises = [
            Path(line.strip())
            for line in Path(args.noise_list).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        missing = [p for p in noises if not p.exists()]
        if missing:
            raise CliError(f"noise WAVs not found: {missing}")

    new_records: list[corpus.UtteranceRecord] = list(manifest.records)
    written = skipped = 0
    failures: list[tuple[str, Exception]] = []
    for rec in manifest.records:
        if rec.split not in ("train", "adaptation"):
            continue
        for k in range(args.copies):
            aug_id = f"{rec.utt_id}#aug{k}"
            rng = np.random.default_rng(aug.derive_seed(spec.seed, aug_id))
            dest = embedio.femb_path(out_dir, aug_id)
            try:
                w = dsp.read_wav(_resolve_audio(rec, manifest_path))
                if w.sample_rate != cfg.frontend.sample_rate:
                    w = dsp.resample(w, cfg.frontend.sample_rate)
                noise = None
                if noises:
                    noise = dsp.read_wav(noises[int(rng.integers(0, len(noises)))])
                    if noise.sample_rate != w.sample_rate:
                        noise = dsp.resample(noise, w.sample_rate)
                wa = aug.augment_waveform(w, spec, rng, noise)
                if dest.exists() and not args.force:
                    skipped += 1
                else:
                    mel = aug.augment_features(dsp.log_mel(wa, cfg.frontend), spec, rng)
                    embedio.write_femb(embedio.EmbeddingSequence(mel.frames, aug_id), dest)
                    written += 1
                new_records.append(corpus.with_suffixed_id(rec, f"#aug{k}", wa.duration_s))
            except (dsp.WavFormatError, FileNotFoundError, OSError, ValueError) as exc:
                failures.append((aug_id, exc))
    for utt, exc in failures:
        log.error("%s: %s", utt, exc)
    out_manifest = out_dir / "augmented.tsv"
    corpus.save_manifest(corpus.Manifest(manifest.registry, tuple(new_records)), out_manifest)
    print(
        f"augment: {written} written, {skipped} skipped, {len(failures)} failed; "
        f"manifest -> {out_manifest}"
    )
    return EXIT_DATA if failures else EXIT_OK


def _cmd_train(args, cfg: ExperimentConfig) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train
    if args.seed is not None:
        tcfg.seed = args.seed
    store = trainer.FeatureStore(args.features)
    stage1 = corpus.load_manifest(args.stage1)
    if args.stage2:
        stage2 = corpus.load_manifest(args.stage2)
        state, entries = trainer.two_stage(stage1, stage2, store, tcfg)
    else:
        state, entries = trainer.fit(stage1, store, tcfg)
    head.save_params(state.params, out_dir / "model.head")
    trainer.save_state(state, out_dir / "model.state")
    trainer.write_log(entries, out_dir / "train_log.txt")
    print(
        f"train: best validation metric {state.best_metric:.4f} at epoch {state.epoch}; "
        f"artifacts in {out_dir}"
    )
    return EXIT_OK


def _cmd_infer(args) -> int:
    params = head.load_params(args.checkpoint)
    manifest = corpus.load_manifest(args.manifest)
    if params.config.n_classes != len(manifest.registry):
        raise CliError(
            f"checkpoint has {params.config.n_classes} classes, "
            f"manifest registry has {len(manifest.registry)}"
        )
    store = trainer.FeatureStore(args.features)
    records = manifest.split_records(args.split)
    if not records:
        raise CliError(f"no records in split {args.split!r}")
    utt_ids, rows, labels = [], [], []
    for rec in records:
        out = head.forward(params, store.get(rec.utt_id))
        utt_ids.append(rec.utt_id)
        rows.append(out.log_probs)
        labels.append(manifest.registry.index(rec.dialect))
    ts = metrics_adi.TrialScores(
        utt_ids, np.array(rows), np.array(labels), manifest.registry.codes
    )
    metrics_adi.write_scores(ts, args.out)
    print(f"infer: scored {len(records)} {args.split} trials -> {args.out}")
    return EXIT_OK


def _cmd_score_adi(args, cfg: ExperimentConfig) -> int:
    ts = metrics_adi.read_scores(args.scores)
    if args.manifest:
        manifest = corpus.load_manifest(args.manifest)
        if manifest.registry.codes != ts.registry:
            raise CliError(
                f"registry mismatch: scores {ts.registry} vs manifest {manifest.registry.codes}"
            )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cm = metrics_adi.confusion(ts)
    acc = metrics_adi.accuracy(cm)
    cost = metrics_adi.lre_cost(ts, cfg.lre)
    (out_dir / "confusion.csv").write_text(report.confusion_csv(cm, ts.registry), encoding="utf-8")
    (out_dir / "confusion.svg").write_text(
        report.confusion_svg(cm, ts.registry, axis=args.normalize), encoding="utf-8"
    )
    (out_dir / "metrics.txt").write_text(
        f"trials {len(ts.utt_ids)}\naccuracy {acc:.2f}\nlre_cost {cost:.4f}\n", encoding="utf-8"
    )
    print(f"accuracy {acc:.2f}")
    print(f"lre_cost {cost:.4f}")
    return EXIT_OK


def _cmd_score_asr(args, cfg: ExperimentConfig) -> int:
    manifest = corpus.load_manifest(args.manifest)
    refs = metrics_asr.read_trn(args.ref)
    dialect_of = {r.utt_id: r.dialect for r in manifest.records}
    unknown = sorted(u for u in refs if u not in dialect_of)
    if unknown:
        raise CliError(f"reference utterances missing from the manifest: {unknown[:5]}")

    routing = dict(cfg.asr_routing)
    single: str | None = None
    for item in args.hyp:
        if "=" in item:
            code, path = item.split("=", 1)
            routing[code] = path
        else:
            single = item
    dialects = sorted({dialect_of[u] for u in refs})
    hyp_tables: dict[str, dict[str, str]] = {}
    for code in dialects:
        path = routing.get(code, single)
        if path is None:
            raise CliError(f"no hypothesis file routed for dialect {code!r}")
        hyp_tables[code] = metrics_asr.read_trn(path)

    policy = cfg.normalization
    rows = []
    wer_by_dialect: dict[str, float] = {}
    cer_by_dialect: dict[str, float] = {}
    for code in dialects:
        utts = [u for u in refs if dialect_of[u] == code]
        missing = [u for u in utts if u not in hyp_tables[code]]
        if missing:
            raise CliError(f"{code}: hypotheses missing for {missing[:5]}")
        pairs = [(refs[u], hyp_tables[code][u]) for u in utts]
        words = metrics_asr.corpus_totals(pairs, "word", policy)
        chars = metrics_asr.corpus_totals(pairs, "char", policy)
        wer_by_dialect[code] = words.rate
        cer_by_dialect[code] = chars.rate
        rows.append(
            dict(
                dialect=code, wer=words.rate, cer=chars.rate,
                word_sub=words.substitutions, word_del=words.deletions,
                word_ins=words.insertions, word_ref_len=words.ref_len,
            )
        )
    macro_wer = metrics_asr.macro_average(wer_by_dialect)
    macro_cer = metrics_asr.macro_average(cer_by_dialect)
    rows.append(
        dict(dialect="MACRO", wer=macro_wer, cer=macro_cer,
             word_sub="", word_del="", word_ins="", word_ref_len="")
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "asr_results.csv").write_text(report.asr_csv(rows), encoding="utf-8")
    for row in rows:
        print(f"{row['dialect']:8s} WER {row['wer']:6.2f}  CER {row['cer']:6.2f}")
    return EXIT_OK


def _cmd_report(args) -> int:
    ts = metrics_adi.read_scores(args.scores)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cm = metrics_adi.confusion(ts)
    acc = metrics_adi.accuracy(cm)
    cost = metrics_adi.lre_cost(ts)
    text = report.adi_markdown(acc, cost, cm, ts.registry)
    (out_dir / "report.md").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _load_config(args)
        if args.command == "manifest":
            if args.manifest_command == "build":
                return _cmd_manifest_build(args)
            if args.manifest_command == "summarize":
                return _cmd_manifest_summarize(args)
            return _cmd_manifest_stratify(args)
        if args.command == "featurize":
            return _cmd_featurize(args, cfg)
        if args.command == "augment":
            return _cmd_augment(args, cfg)
        if args.command == "train":
            return _cmd_train(args, cfg)
        if args.command == "infer":
            return _cmd_infer(args)
        if args.command == "score-adi":
            return _cmd_score_adi(args, cfg)
        if args.command == "score-asr":
            return _cmd_score_asr(args, cfg)
        if args.command == "report":
            return _cmd_report(args)
        raise AssertionError(f"unhandled command {args.command!r}")
    except (
        CliError,
        ConfigError,
        corpus.ManifestError,
        dsp.WavFormatError,
        embedio.FembError,
        metrics_adi.ScoreError,
        trainer.TrainDataError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except (trainer.NonFiniteGradientError, FloatingPointError, ZeroDivisionError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
