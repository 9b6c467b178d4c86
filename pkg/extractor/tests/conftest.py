import pytest

from wav_helpers import write_tone_wav


@pytest.fixture
def sample_manifest(tmp_path):
    """Ten 1-second utterances over two dialects, manifest in the shared TSV format."""
    audio = tmp_path / "wavs"
    audio.mkdir()
    lines = []
    for k in range(10):
        wav = audio / f"u{k}.wav"
        write_tone_wav(wav, freq_hz=300.0 + 40.0 * k)
        dialect = "AAA" if k % 2 == 0 else "BBB"
        lines.append(f"u{k}\t{wav}\t{dialect}\t1.0\ttest\t")
    path = tmp_path / "manifest.tsv"
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path
