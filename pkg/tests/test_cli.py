import io
import json
import sys

import numpy as np
import pytest

from fuzzyspeech import synth_corpus as sc
from fuzzyspeech.audio_features import AudioClip, write_wav
from fuzzyspeech.cli import EXIT_ERROR, EXIT_OK, EXIT_OOV, main, parse_record
from fuzzyspeech.recognizer import load_store

SMALL = ["--stretch", "0.8", "1.25", "--gain", "-6", "6", "--tilt", "0"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def records(text):
    return [parse_record(line) for line in text.splitlines() if line.strip()]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "corpus"), *SMALL, "--homophone"]) == 0
    assert main(["enroll", "--lexicon", str(root / "corpus" / "lexicon"),
                 "--store", str(root / "store.json")]) == 0
    return root


def test_synth_writes_corpus(workdir):
    c = workdir / "corpus"
    rows = sc.read_manifest(c / "manifest.tsv")
    assert len(rows) == 40
    assert all((c / r.filename).is_file() for r in rows)
    assert len(list((c / "lexicon").glob("*.wav"))) == 10
    assert (c / "homophone.wav").is_file()
    assert json.loads((c / "corpus.json").read_text())["seed"] == 0


def test_synth_records_and_bytes_deterministic(tmp_path, capsys):
    outs = []
    for k in range(2):
        code, out, _ = run(capsys, "--format", "records", "--seed", 5, "synth",
                           "--out", tmp_path / f"r{k}", "--grid", "neutral")
        assert code == EXIT_OK
        (rec,) = records(out)
        assert rec["type"] == "synth_summary" and rec["seed"] == 5 and rec["clips"] == 10
        outs.append(sorted((p.relative_to(tmp_path / f"r{k}"), p.read_bytes())
                           for p in (tmp_path / f"r{k}").rglob("*") if p.is_file()))
    assert outs[0] == outs[1]


def test_synth_bad_spec_names_field(tmp_path, capsys):
    spec = {"words": [{"label": "x", "phones": [{"duration_ms": 300, "formants": [500]}]}],
            "grid": {"stretch": [8.0], "gain_db": [0], "tilt": [0]}}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    code, _, err = run(capsys, "synth", "--spec", path, "--out", tmp_path / "o")
    assert code == EXIT_ERROR
    assert "invalid spec field" in err


def test_enroll_summary(workdir):
    store = load_store(workdir / "store.json")
    assert len(store.words) == 10 and len(store) == 10


def test_enroll_appends_duplicate_label(workdir, tmp_path, capsys):
    target = tmp_path / "s.json"
    target.write_bytes((workdir / "store.json").read_bytes())
    code, out, _ = run(capsys, "--format", "records", "enroll", "--word", "Vector", "--audio",
                       workdir / "corpus" / "lexicon" / "vector.wav", "--store", target)
    assert code == EXIT_OK
    (rec,) = records(out)
    assert rec["counts"]["vector"] == 2 and rec["templates"] == 11


def test_enroll_reports_bad_clip(workdir, tmp_path, capsys):
    silent = tmp_path / "hush.wav"
    write_wav(silent, AudioClip(np.zeros(8000)))
    code, out, err = run(capsys, "--format", "records", "enroll", "--word", "hush", "--audio",
                         silent, "--store", tmp_path / "s.json")
    assert code == EXIT_ERROR
    assert "one isolated word" in err
    assert records(out)[0]["type"] == "enroll_error"


def test_analyze_profiles_slow_word(workdir, tmp_path, capsys):
    clip = sc.time_stretch(sc.make_word(sc.DEFAULT_LEXICON[0]), 1.5)
    path = tmp_path / "slow.wav"
    write_wav(path, clip)
    code, out, _ = run(capsys, "--format", "records", "analyze", "--input", path,
                       "--store", workdir / "store.json", "--frames-out", tmp_path / "f.jsonl")
    assert code == EXIT_OK
    (rec,) = records(out)
    deg = rec["profile"]["speed"]["degrees"]
    assert deg["slow"] > deg["fast"] and rec["profile"]["speed"]["crisp"] < 0
    lines = (tmp_path / "f.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["frame"] == 0


def test_analyze_without_store_warns(workdir, capsys):
    code, out, err = run(capsys, "analyze", "--input", workdir / "corpus" / "lexicon" / "boat.wav")
    assert code == EXIT_OK and "warning" in err and "1 segments" in out


def test_analyze_silence(tmp_path, capsys):
    path = tmp_path / "quiet.wav"
    write_wav(path, AudioClip(np.zeros(16000)))
    code, out, _ = run(capsys, "analyze", "--input", path)
    assert code == EXIT_OK and "0 segments" in out


def test_filter_records_and_npz(workdir, tmp_path, capsys):
    src = workdir / "corpus" / "lexicon" / "speech.wav"
    code, out, _ = run(capsys, "--format", "records", "filter", "--input", src,
                       "--store", workdir / "store.json", "--out", tmp_path / "f.npz")
    assert code == EXIT_OK
    (rec,) = records(out)
    assert rec["type"] == "paralinguistic" and "corrections" in rec and "before" in rec
    data = np.load(tmp_path / "f.npz")
    assert set(data.files) == {"seg0_filtered", "seg0_original"}


def test_recognize_word(workdir, tmp_path, capsys):
    code, out, _ = run(capsys, "--format", "records", "recognize", "--input",
                       workdir / "corpus" / "lexicon" / "dog.wav", "--store", workdir / "store.json",
                       "--dump-cost", tmp_path / "cost")
    assert code == EXIT_OK
    (rec,) = records(out)
    assert rec["hypotheses"][0]["word"] == "dog"
    assert list((tmp_path / "cost").glob("*.txt"))


def test_recognize_noise_is_oov(workdir, tmp_path, capsys):
    rng = np.random.default_rng(3)
    x = np.concatenate([np.zeros(4000), 0.2 * rng.standard_normal(12000), np.zeros(4000)])
    write_wav(tmp_path / "noise.wav", AudioClip(x))
    code, out, _ = run(capsys, "--format", "records", "recognize", "--input",
                       tmp_path / "noise.wav", "--store", workdir / "store.json")
    assert code == EXIT_OOV
    assert records(out)[0]["out_of_vocabulary"]


def test_recognize_missing_inputs(workdir, tmp_path, capsys):
    code, _, err = run(capsys, "recognize", "--input", tmp_path / "nope.wav",
                       "--store", workdir / "store.json")
    assert code == EXIT_ERROR and "not found" in err
    code, _, err = run(capsys, "recognize", "--input", tmp_path / "nope.wav",
                       "--store", tmp_path / "none.json")
    assert code == EXIT_ERROR and "template store" in err


def test_interactive_homophone(workdir, tmp_path, capsys, monkeypatch):
    store = tmp_path / "h.json"
    wav = workdir / "corpus" / "homophone.wav"
    for word in ("tail", "tale"):
        assert main(["enroll", "--word", word, "--audio", str(wav), "--store", str(store)]) == 0
    capsys.readouterr()
    monkeypatch.setattr(sys, "stdin", io.StringIO("tale\n"))
    code, out, err = run(capsys, "--format", "records", "recognize", "--interactive",
                         "--input", wav, "--store", store)
    assert code == EXIT_OK
    assert "did you say" in err
    rec, entry = records(out)
    assert rec["ambiguous"] and abs(rec["hypotheses"][0]["score"] - rec["hypotheses"][1]["score"]) < 1e-9
    assert (entry["type"], entry["word"], entry["origin"]) == ("transcript", "tale", "user")


def test_eval_records(workdir, capsys):
    args = ["--format", "records", "eval", "--store", workdir / "store.json",
            "--corpus", workdir / "corpus" / "manifest.tsv"]
    code, out, _ = run(capsys, *args)
    assert code == EXIT_OK
    recs = records(out)
    summary = recs[0]
    assert summary["type"] == "eval_summary" and summary["clips"] == 40 and summary["filter"]
    assert summary["accuracy"] >= 0.9
    axes = [r for r in recs if r["type"] == "eval_axis"]
    assert {r["axis"] for r in axes} == {"stretch", "gain_db", "tilt"}
    code, again, _ = run(capsys, *args)
    assert again == out
    code, off, _ = run(capsys, *args, "--no-filter")
    assert records(off)[0]["filter"] is False


def test_eval_respects_config(workdir, tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("filter.enabled = false\n")
    code, out, _ = run(capsys, "--config", cfg, "--format", "records", "eval",
                       "--store", workdir / "store.json",
                       "--corpus", workdir / "corpus" / "manifest.tsv")
    assert code == EXIT_OK and records(out)[0]["filter"] is False


def test_eval_missing_and_empty(workdir, tmp_path, capsys):
    rows = sc.read_manifest(workdir / "corpus" / "manifest.tsv")[:2]
    sc.write_manifest(tmp_path / "m.tsv", rows)
    code, out, err = run(capsys, "--format", "records", "eval", "--store",
                         workdir / "store.json", "--corpus", tmp_path / "m.tsv")
    assert code == EXIT_ERROR and "missing clip" in err
    assert [r["type"] for r in records(out)] == ["eval_missing"] * 2
    sc.write_manifest(tmp_path / "e.tsv", [])
    code, _, err = run(capsys, "eval", "--store", workdir / "store.json",
                       "--corpus", tmp_path / "e.tsv")
    assert code == EXIT_ERROR and "empty manifest" in err


def test_usage_errors(capsys):
    assert run(capsys, "recognize")[0] == EXIT_ERROR
    assert run(capsys, "frobnicate")[0] == EXIT_ERROR
    assert run(capsys, "--config", "/nonexistent.cfg", "synth", "--out", "/tmp/x")[0] == EXIT_ERROR
