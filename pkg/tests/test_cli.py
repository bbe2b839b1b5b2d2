"""CLI surface: ingest, run-sim, report."""
import json

import numpy as np

from batchal.audio import AudioClip, CLIP_SAMPLES, write_wav
from batchal.cli import main
from batchal.data import ManifestRecord, load_dataset_dir, write_manifest


def make_wav_dataset(tmp_path, n=10):
    rng = np.random.default_rng(0)
    wav_dir = tmp_path / "wavs"
    wav_dir.mkdir()
    t = np.arange(CLIP_SAMPLES) / 16000.0
    records = []
    for i in range(n):
        label = i % 2
        freq = 600.0 if label == 0 else 2400.0
        clip = AudioClip(samples=0.5 * np.sin(2 * np.pi * freq * t)
                         + 0.01 * rng.standard_normal(CLIP_SAMPLES))
        write_wav(wav_dir / f"s{i}.wav", clip)
        records.append(ManifestRecord(f"s{i}", f"s{i}.wav", label,
                                      "train" if i < n - 2 else "test"))
    manifest = tmp_path / "manifest.csv"
    write_manifest(manifest, records)
    return manifest, wav_dir


def test_ingest_command(tmp_path, capsys):
    manifest, wav_dir = make_wav_dataset(tmp_path)
    rc = main(["ingest", "--manifest", str(manifest), "--audio-root", str(wav_dir),
               "--out", str(tmp_path / "ds")])
    assert rc == 0
    ds = load_dataset_dir(tmp_path / "ds")
    assert len(ds.ids) == 10
    assert "ingested dataset" in capsys.readouterr().out


def sim_config(tmp_path, strategy="uniform"):
    cfg = {
        "dataset": {"kind": "clusters", "n": 90, "n_classes": 3, "dim": 4, "seed": 0},
        "strategy": strategy,
        "start_labels": 3,
        "end_labels": 9,
        "b": 3,
        "seeds": [0],
        "selection": {"nr_it": 30, "m": 24, "train_augmented": False},
    }
    path = tmp_path / f"{strategy}.json"
    path.write_text(json.dumps(cfg))
    return path


def test_run_sim_and_report(tmp_path, capsys):
    uni_cfg = sim_config(tmp_path, "uniform")
    mix_cfg = sim_config(tmp_path, "mixed")
    assert main(["run-sim", "--config", str(uni_cfg), "--out", str(tmp_path / "uni")]) == 0
    assert main(["run-sim", "--config", str(mix_cfg), "--out", str(tmp_path / "mix")]) == 0
    out = capsys.readouterr().out
    assert "labels=   9" in out

    report_path = tmp_path / "report.csv"
    assert main(["report", str(tmp_path / "uni"), str(tmp_path / "mix"),
                 "--out", str(report_path)]) == 0
    text = report_path.read_text()
    assert "# summary" in text and "uniform" in text and "mixed" in text


def test_run_sim_overrides(tmp_path, capsys):
    cfg = sim_config(tmp_path, "uniform")
    assert main(["run-sim", "--config", str(cfg), "--strategy", "kcenter",
                 "--seed", "7", "--rounds", "1"]) == 0
    out = capsys.readouterr().out
    assert out.count("labels=") == 2  # start plus one round
