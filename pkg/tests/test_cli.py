import hashlib

import numpy as np
import pytest

from dialect_bench import embedio
from dialect_bench.cli import main
from dialect_bench.corpus import (
    Manifest,
    Registry,
    UtteranceRecord,
    load_manifest,
    nadi_registry,
    save_manifest,
)
from dialect_bench.dsp import Waveform, write_wav
from dialect_bench.metrics_adi import scores_from_confusion, write_scores

from nadi_fixtures import NADI_DEV_CONFUSION, make_tone


def tree_snapshot(root):
    return {p for p in root.rglob("*") if p.is_file()}


def make_audio_manifest(tmp_path, n_per_split=2, splits=("train", "validation")):
    """Two-dialect manifest over real tone WAVs (distinct pitch per dialect)."""
    reg = Registry.from_codes(["AAA", "BBB"])
    audio = tmp_path / "audio"
    audio.mkdir(exist_ok=True)
    records = []
    for d_idx, code in enumerate(reg.codes):
        for split in splits:
            for k in range(n_per_split):
                freq = 400.0 + 400.0 * d_idx + 10.0 * k
                w = make_tone(freq, dur_s=0.3)
                path = audio / f"{code}_{split}_{k}.wav"
                write_wav(path, w)
                records.append(
                    UtteranceRecord(f"{code}_{split}_{k}", str(path), code, 0.3, split)
                )
    manifest = Manifest(reg, tuple(records))
    mpath = tmp_path / "manifest.tsv"
    save_manifest(manifest, mpath)
    return mpath, manifest


class TestParser:
    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0

    def test_unknown_flag_exits_64(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--definitely-not-a-flag"])
        assert exc.value.code == 64

    def test_unknown_subcommand_flag_exits_64(self):
        with pytest.raises(SystemExit) as exc:
            main(["featurize", "--bogus", "x"])
        assert exc.value.code == 64

    def test_missing_required_exits_64(self):
        with pytest.raises(SystemExit) as exc:
            main(["featurize"])
        assert exc.value.code == 64


class TestManifestCommands:
    def test_build_summarize_stratify_flow(self, tmp_path, capsys):
        audio = tmp_path / "tree"
        for code in ("AAA", "BBB"):
            for split in ("train", "validation"):
                d = audio / code / split
                d.mkdir(parents=True)
                for k in range(2):
                    write_wav(d / f"u{k}.wav", make_tone(500.0, dur_s=0.25))
        out = tmp_path / "built.tsv"
        assert main(["manifest", "build", "--audio-dir", str(audio), "--out", str(out)]) == 0
        m = load_manifest(out)
        assert len(m) == 8
        assert main(["manifest", "summarize", "--manifest", str(out), "--split", "train"]) == 0
        assert "AAA" in capsys.readouterr().out

        strat = tmp_path / "strat.tsv"
        code = main(
            ["manifest", "stratify", "--manifest", str(out), "--cap-hours",
             str(0.25 / 3600.0 * 1.5), "--seed", "3", "--out", str(strat)]
        )
        assert code == 0
        sub = load_manifest(strat)
        per_dialect = {}
        for rec in sub.split_records("train"):
            per_dialect[rec.dialect] = per_dialect.get(rec.dialect, 0) + 1
        assert all(v == 1 for v in per_dialect.values())

    def test_summarize_prints_published_totals(self, tmp_path, capsys):
        from nadi_fixtures import nadi_table_manifest

        mpath = tmp_path / "nadi.tsv"
        save_manifest(nadi_table_manifest(), mpath)
        assert main(["manifest", "summarize", "--manifest", str(mpath),
                     "--split", "train"]) == 0
        out = capsys.readouterr().out
        assert "15.44" in out and "2.43" in out

    def test_stratify_empty_manifest_exits_zero(self, tmp_path):
        src = tmp_path / "empty.tsv"
        src.write_text("", encoding="utf-8")
        out = tmp_path / "out.tsv"
        assert main(["manifest", "stratify", "--manifest", str(src),
                     "--cap-hours", "1", "--out", str(out)]) == 0
        assert out.read_text() == ""

    def test_invalid_manifest_exits_2(self, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("u1\ta.wav\tALG\t1.0\ttrain\t\nu1\tb.wav\tALG\t1.0\ttrain\t\n")
        assert main(["manifest", "summarize", "--manifest", str(bad)]) == 2


class TestFeaturize:
    def test_writes_skips_and_forces(self, tmp_path, capsys):
        mpath, manifest = make_audio_manifest(tmp_path)
        out = tmp_path / "feats"
        assert main(["featurize", "--manifest", str(mpath), "--out-dir", str(out)]) == 0
        files = sorted(out.glob("*.femb"))
        assert len(files) == len(manifest)
        e = embedio.read_femb(files[0])
        assert e.dim == 128
        stamps = {p: p.stat().st_mtime_ns for p in files}

        assert main(["featurize", "--manifest", str(mpath), "--out-dir", str(out)]) == 0
        assert "8 skipped" in capsys.readouterr().out
        assert all(p.stat().st_mtime_ns == stamps[p] for p in files)

        assert main(["featurize", "--manifest", str(mpath), "--out-dir", str(out),
                     "--force"]) == 0
        assert "8 written" in capsys.readouterr().out

    def test_missing_audio_continues_and_exits_2(self, tmp_path):
        mpath, manifest = make_audio_manifest(tmp_path)
        records = list(manifest.records) + [
            UtteranceRecord("ghost", str(tmp_path / "nope.wav"), "AAA", 1.0, "train")
        ]
        save_manifest(Manifest(manifest.registry, tuple(records)), mpath)
        out = tmp_path / "feats"
        assert main(["featurize", "--manifest", str(mpath), "--out-dir", str(out)]) == 2
        assert len(list(out.glob("*.femb"))) == len(manifest)

    def test_writes_stay_inside_out_dir(self, tmp_path):
        mpath, _ = make_audio_manifest(tmp_path)
        out = tmp_path / "feats"
        before = tree_snapshot(tmp_path) | {out}
        assert main(["featurize", "--manifest", str(mpath), "--out-dir", str(out)]) == 0
        created = tree_snapshot(tmp_path) - before
        assert created
        assert all(out in p.parents for p in created)

    def test_non_16k_audio_resampled(self, tmp_path):
        from nadi_fixtures import make_tone

        reg = Registry.from_codes(["AAA", "BBB"])
        wav = tmp_path / "slow.wav"
        write_wav(wav, make_tone(300.0, rate=8000, dur_s=0.5))
        mpath = tmp_path / "m.tsv"
        save_manifest(
            Manifest(reg, (
                UtteranceRecord("slow", str(wav), "AAA", 0.5, "train"),
                UtteranceRecord("slow2", str(wav), "BBB", 0.5, "train"),
            )),
            mpath,
        )
        out = tmp_path / "f"
        assert main(["featurize", "--manifest", str(mpath), "--out-dir", str(out)]) == 0
        e = embedio.read_femb(out / "slow.femb")
        # 0.5 s at 16 kHz after resampling: 1 + (8000 - 400) // 160 frames
        assert e.frames.shape == (48, 128)

    def test_jobs_env_fallback(self, monkeypatch):
        from dialect_bench.cli import _default_jobs

        monkeypatch.setenv("DIALECT_BENCH_JOBS", "3")
        assert _default_jobs() == 3
        monkeypatch.setenv("DIALECT_BENCH_JOBS", "junk")
        assert _default_jobs() >= 1


class TestAugment:
    def test_emits_suffixed_ids_and_is_deterministic(self, tmp_path):
        mpath, manifest = make_audio_manifest(tmp_path)
        out1, out2 = tmp_path / "a1", tmp_path / "a2"
        for out in (out1, out2):
            assert main(["augment", "--manifest", str(mpath), "--out-dir", str(out),
                         "--copies", "2", "--seed", "5"]) == 0
        aug_manifest = load_manifest(out1 / "augmented.tsv")
        train_ids = {r.utt_id for r in manifest.records if r.split == "train"}
        aug_ids = {r.utt_id for r in aug_manifest.records} - {r.utt_id for r in manifest.records}
        assert aug_ids == {f"{u}#aug{k}" for u in train_ids for k in range(2)}
        for utt in sorted(aug_ids):
            a = (out1 / f"{utt}.femb").read_bytes()
            b = (out2 / f"{utt}.femb").read_bytes()
            assert a == b

    def test_validation_records_not_augmented(self, tmp_path):
        mpath, manifest = make_audio_manifest(tmp_path)
        out = tmp_path / "aug"
        assert main(["augment", "--manifest", str(mpath), "--out-dir", str(out)]) == 0
        assert not list(out.glob("*validation*#aug*"))

    def test_noise_list_mixes_noise(self, tmp_path):
        mpath, _ = make_audio_manifest(tmp_path)
        rng = np.random.default_rng(0)
        noise_wav = tmp_path / "noise.wav"
        write_wav(noise_wav, Waveform((0.05 * rng.standard_normal(8000)).astype(np.float32), 16000))
        noise_list = tmp_path / "noise.txt"
        noise_list.write_text(f"{noise_wav}\n", encoding="utf-8")
        clean, noisy = tmp_path / "clean", tmp_path / "noisy"
        assert main(["augment", "--manifest", str(mpath), "--out-dir", str(clean),
                     "--seed", "1"]) == 0
        assert main(["augment", "--manifest", str(mpath), "--out-dir", str(noisy),
                     "--noise-list", str(noise_list), "--seed", "1"]) == 0
        a = (clean / "AAA_train_0#aug0.femb").read_bytes()
        b = (noisy / "AAA_train_0#aug0.femb").read_bytes()
        assert a != b

    def test_missing_noise_file_exits_2(self, tmp_path):
        mpath, _ = make_audio_manifest(tmp_path)
        noise_list = tmp_path / "noise.txt"
        noise_list.write_text(str(tmp_path / "ghost.wav") + "\n", encoding="utf-8")
        assert main(["augment", "--manifest", str(mpath), "--out-dir",
                     str(tmp_path / "o"), "--noise-list", str(noise_list)]) == 2


def train_args(tmp_path, mpath, feats, out, extra=()):
    cfg = tmp_path / "train.yaml"
    cfg.write_text(
        "train:\n  lr_high: 0.05\n  lr_low: 0.0\n  max_epochs: 3\n  patience: 2\n"
        "  att_dim: 8\n  batch_size: 4\n",
        encoding="utf-8",
    )
    return ["train", "--config", str(cfg), "--stage1", str(mpath),
            "--features", str(feats), "--out-dir", str(out), *extra]


class TestTrainInferScore:
    def test_train_artifacts_and_determinism(self, tmp_path, capsys):
        mpath, _ = make_audio_manifest(tmp_path, n_per_split=3)
        feats = tmp_path / "feats"
        assert main(["featurize", "--manifest", str(mpath), "--out-dir", str(feats)]) == 0

        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        assert main(train_args(tmp_path, mpath, feats, out1)) == 0
        assert (out1 / "model.head").exists()
        assert (out1 / "model.state").exists()
        log_lines = (out1 / "train_log.txt").read_text().splitlines()
        assert 1 <= len(log_lines) <= 3
        assert all(len(line.split(", ")) == 6 for line in log_lines)

        assert main(train_args(tmp_path, mpath, feats, out2)) == 0
        d1 = hashlib.sha256((out1 / "model.head").read_bytes()).hexdigest()
        d2 = hashlib.sha256((out2 / "model.head").read_bytes()).hexdigest()
        assert d1 == d2

        scores = tmp_path / "scores.tsv"
        assert main(["infer", "--checkpoint", str(out1 / "model.head"),
                     "--manifest", str(mpath), "--features", str(feats),
                     "--out", str(scores)]) == 0
        assert main(["score-adi", "--scores", str(scores),
                     "--manifest", str(mpath), "--out-dir", str(tmp_path / "sc")]) == 0
        assert (tmp_path / "sc" / "confusion.svg").exists()

    def test_two_stage_logs_mark_the_boundary(self, tmp_path):
        mpath, manifest = make_audio_manifest(tmp_path, n_per_split=2)
        adapt_records = []
        for rec in manifest.records:
            split = "adaptation" if rec.split == "train" else rec.split
            adapt_records.append(
                UtteranceRecord(f"ad_{rec.utt_id}", rec.audio_path, rec.dialect,
                                rec.duration_s, split)
            )
        apath = tmp_path / "adapt.tsv"
        save_manifest(Manifest(manifest.registry, tuple(adapt_records)), apath)
        feats = tmp_path / "feats"
        assert main(["featurize", "--manifest", str(mpath), "--out-dir", str(feats)]) == 0
        assert main(["featurize", "--manifest", str(apath), "--out-dir", str(feats)]) == 0
        out = tmp_path / "run"
        assert main(train_args(tmp_path, mpath, feats, out,
                               extra=("--stage2", str(apath)))) == 0
        splits = [line.split(", ")[1] for line in
                  (out / "train_log.txt").read_text().splitlines()]
        assert "train" in splits and "adaptation" in splits
        assert splits.index("adaptation") > splits.index("train")


class TestScoreAdi:
    def test_published_confusion_scores(self, tmp_path, capsys):
        ts = scores_from_confusion(np.array(NADI_DEV_CONFUSION), nadi_registry().codes)
        spath = tmp_path / "scores.tsv"
        write_scores(ts, spath)
        out = tmp_path / "adi"
        assert main(["score-adi", "--scores", str(spath), "--out-dir", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "accuracy 98.08" in stdout
        assert (out / "confusion.csv").read_text().count("\n") == 9
        svg = (out / "confusion.svg").read_text()
        assert svg.count("<rect") == 64
        assert "1563" in svg

    def test_registry_mismatch_exits_2(self, tmp_path):
        ts = scores_from_confusion(np.array([[2, 0], [1, 3]]), ("AAA", "BBB"))
        spath = tmp_path / "scores.tsv"
        write_scores(ts, spath)
        other = tmp_path / "m.tsv"
        save_manifest(
            Manifest(Registry.from_codes(["XXX", "YYY"]),
                     (UtteranceRecord("u", "u.wav", "XXX", 1.0, "train"),)),
            other,
        )
        assert main(["score-adi", "--scores", str(spath), "--manifest", str(other),
                     "--out-dir", str(tmp_path / "o")]) == 2


class TestScoreAsr:
    def build_fixture(self, tmp_path):
        reg = Registry.from_codes(["AAA", "BBB"])
        records = (
            UtteranceRecord("a1", "x.wav", "AAA", 1.0, "test"),
            UtteranceRecord("a2", "x.wav", "AAA", 1.0, "test"),
            UtteranceRecord("b1", "x.wav", "BBB", 1.0, "test"),
        )
        mpath = tmp_path / "m.tsv"
        save_manifest(Manifest(reg, records), mpath)
        (tmp_path / "ref.tsv").write_text(
            "a1\tw x y z\na2\tp q\nb1\tm n\n", encoding="utf-8"
        )
        # AAA: 0 errors over 6 ref words; BBB: 1 sub over 2 -> 50%
        (tmp_path / "hyp_a.tsv").write_text("a1\tw x y z\na2\tp q\n", encoding="utf-8")
        (tmp_path / "hyp_b.tsv").write_text("b1\tm o\n", encoding="utf-8")
        return mpath

    def test_routing_and_macro(self, tmp_path, capsys):
        mpath = self.build_fixture(tmp_path)
        out = tmp_path / "asr"
        code = main(["score-asr", "--manifest", str(mpath),
                     "--ref", str(tmp_path / "ref.tsv"),
                     "--hyp", f"AAA={tmp_path / 'hyp_a.tsv'}",
                     "--hyp", f"BBB={tmp_path / 'hyp_b.tsv'}",
                     "--out-dir", str(out)])
        assert code == 0
        csv = (out / "asr_results.csv").read_text().splitlines()
        assert csv[1].startswith("AAA,0.00")
        assert csv[2].startswith("BBB,50.00")
        assert csv[3].startswith("MACRO,25.00")

    def test_missing_route_exits_2(self, tmp_path):
        mpath = self.build_fixture(tmp_path)
        assert main(["score-asr", "--manifest", str(mpath),
                     "--ref", str(tmp_path / "ref.tsv"),
                     "--hyp", f"AAA={tmp_path / 'hyp_a.tsv'}",
                     "--out-dir", str(tmp_path / "o")]) == 2


class TestReport:
    def test_report_renders(self, tmp_path, capsys):
        ts = scores_from_confusion(np.array([[5, 1], [0, 6]]), ("AAA", "BBB"))
        spath = tmp_path / "scores.tsv"
        write_scores(ts, spath)
        assert main(["report", "--scores", str(spath), "--out-dir", str(tmp_path / "r")]) == 0
        text = (tmp_path / "r" / "report.md").read_text()
        assert "AAA -> BBB: 1" in text

    def test_empty_scores_exit_2(self, tmp_path):
        spath = tmp_path / "scores.tsv"
        spath.write_text("utt_id\tlabel\tAAA\tBBB\n", encoding="utf-8")
        assert main(["report", "--scores", str(spath), "--out-dir", str(tmp_path / "r")]) == 2


class TestConfigRoundTrip:
    def test_canonical_yaml_round_trip(self, tmp_path):
        from dialect_bench.config import ExperimentConfig

        cfg = ExperimentConfig(manifests={"stage1": "m.tsv"}, out_dir="runs/x")
        text = cfg.to_yaml()
        again = ExperimentConfig.from_yaml(text).to_yaml()
        assert text == again

    def test_unknown_keys_rejected(self):
        from dialect_bench.config import ConfigError, ExperimentConfig

        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_dict({"learning_rate": 0.1})

    def test_validate_paths(self, tmp_path):
        from dialect_bench.config import ConfigError, ExperimentConfig

        present = tmp_path / "m.tsv"
        present.write_text("", encoding="utf-8")
        ExperimentConfig(manifests={"stage1": str(present)}).validate_paths()
        with pytest.raises(ConfigError, match="missing paths"):
            ExperimentConfig(manifests={"stage1": str(tmp_path / "ghost.tsv")}).validate_paths()

    def test_bad_config_file_exits_2(self, tmp_path):
        bad = tmp_path / "cfg.yaml"
        bad.write_text("train: {lr_high: not_a_number}\n", encoding="utf-8")
        assert main(["report", "--config", str(bad), "--scores", "x",
                     "--out-dir", str(tmp_path / "o")]) == 2

    def test_flags_override_config_seed(self, tmp_path):
        cfgfile = tmp_path / "cfg.yaml"
        cfgfile.write_text("augment:\n  seed: 42\n", encoding="utf-8")
        mpath, _ = make_audio_manifest(tmp_path)
        out_cfg, out_flag = tmp_path / "c", tmp_path / "f"
        assert main(["augment", "--config", str(cfgfile), "--manifest", str(mpath),
                     "--out-dir", str(out_cfg)]) == 0
        assert main(["augment", "--config", str(cfgfile), "--manifest", str(mpath),
                     "--out-dir", str(out_flag), "--seed", "43"]) == 0
        a = (out_cfg / "AAA_train_0#aug0.femb").read_bytes()
        b = (out_flag / "AAA_train_0#aug0.femb").read_bytes()
        assert a != b
