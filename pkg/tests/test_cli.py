import json

import numpy as np
import pytest

from conftest import small_model
from tacnet.checkpoint import save_checkpoint
from tacnet.cli import build_parser, main
from tacnet.signal_core import Waveform
from tacnet.wavio import write_wav


@pytest.fixture(scope="module")
def tiny_ckpt(trained_tiny, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "tiny.tacnet"
    save_checkpoint(trained_tiny, path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestParser:
    @pytest.mark.parametrize("command,flags", [
        ("synth", ["--out", "--n", "--max-count", "--min-count", "--duration-s", "--seed", "--window-ms",
                   "--sample-rate"]),
        ("ingest", ["--dir", "--mode", "--max-count", "--out", "--seed", "--window-ms", "--sample-rate"]),
        ("train", ["--manifest", "--config", "--out", "--history", "--epochs", "--batch-size", "--lr",
                   "--seed", "--patience", "--window-ms", "--balanced-per-class"]),
        ("eval", ["--manifest", "--ckpt", "--split", "--report", "--confusion-csv"]),
        ("sweep", ["--manifest", "--sizes", "--budget-steps", "--out", "--series", "--config", "--seed"]),
        ("gradcheck", ["--seed", "--full", "--tolerance", "--n-classes"]),
        ("count", ["--wav", "--ckpt", "--smooth"]),
    ])
    def test_help_lists_flags(self, capsys, command, flags):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([command, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for flag in flags:
            assert flag in text

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["count", "--wav", "a", "--ckpt", "b", "--bogus"])
        assert exc.value.code == 2
        err = capsys.readouterr().err
        assert err.startswith("error: usage:") and err.count("\n") == 1

    def test_missing_command(self, capsys):
        with pytest.raises(SystemExit):
            main([])


class TestSynthIngest:
    def test_synth(self, capsys, tmp_path):
        code, out, _ = run(capsys, "synth", "--out", tmp_path, "--n", 6, "--max-count", 2, "--duration-s", 0.5)
        assert code == 0
        assert json.loads(out.splitlines()[1])["class_histogram"] == {"0": 2, "1": 2, "2": 2}
        assert (tmp_path / "manifest.json").is_file()

    def test_synth_nothing(self, capsys, tmp_path):
        code, _, err = run(capsys, "synth", "--out", tmp_path, "--n", 0)
        assert code == 1 and "nothing to generate" in err and err.startswith("error: configuration")

    def test_ingest(self, capsys, tmp_path):
        run(capsys, "synth", "--out", tmp_path, "--n", 3, "--max-count", 2, "--duration-s", 0.5)
        code, out, _ = run(capsys, "ingest", "--dir", tmp_path, "--max-count", 2, "--out", tmp_path / "m2.json")
        assert code == 0 and "3 files ingested, 0 errors" in out


class TestTrainEval:
    def test_train_then_eval(self, capsys, tiny_corpus, tmp_path):
        ckpt, hist = tmp_path / "m.tacnet", tmp_path / "h.jsonl"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"frontend": {"n_filters": 8, "kernel_width": 101}}))
        code, out, _ = run(capsys, "train", "--manifest", tiny_corpus.root / "manifest.json", "--config", cfg,
                           "--out", ckpt, "--history", hist, "--epochs", 2)
        assert code == 0 and ckpt.is_file()
        assert len(hist.read_text().splitlines()) == 2
        report, cm = tmp_path / "r.json", tmp_path / "cm.csv"
        code, out, _ = run(capsys, "eval", "--manifest", tiny_corpus.root / "manifest.json", "--ckpt", ckpt,
                           "--report", report, "--confusion-csv", cm)
        assert code == 0 and "overall accuracy" in out
        data = json.loads(report.read_text())
        assert data["max_count"] == 2 and data["n_chunks"] == 40
        assert cm.read_text().startswith("true\\pred,0,1,2\n")

    def test_bad_config_key(self, capsys, tiny_corpus, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"train": {"epochz": 1}}))
        code, _, err = run(capsys, "train", "--manifest", tiny_corpus.root / "manifest.json", "--config", cfg,
                           "--out", tmp_path / "m")
        assert code == 1 and "epochz" in err

    def test_eval_max_count_mismatch(self, capsys, tiny_corpus, tmp_path):
        path = tmp_path / "m.tacnet"
        save_checkpoint(small_model(n_classes=5, dtype=np.float32), path)
        code, _, err = run(capsys, "eval", "--manifest", tiny_corpus.root / "manifest.json", "--ckpt", path)
        assert code == 1 and "max count mismatch" in err

    def test_missing_manifest(self, capsys, tmp_path):
        code, _, err = run(capsys, "eval", "--manifest", tmp_path / "nope.json", "--ckpt", tmp_path / "x")
        assert code == 1 and err.startswith("error: file-not-found")

    def test_bad_checkpoint(self, capsys, tiny_corpus, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"garbage bytes")
        code, _, err = run(capsys, "eval", "--manifest", tiny_corpus.root / "manifest.json", "--ckpt", path)
        assert code == 1 and err.startswith("error: bad-magic")


class TestSweep:
    def test_malformed_sizes(self, capsys, tiny_corpus, tmp_path):
        code, _, err = run(capsys, "sweep", "--manifest", tiny_corpus.root / "manifest.json", "--sizes", "10,x",
                           "--out", tmp_path / "s.csv")
        assert code == 1 and "malformed window size 'x'" in err

    def test_sweep(self, capsys, tiny_corpus, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"frontend": {"n_filters": 8, "kernel_width": 101}}))
        code, out, _ = run(capsys, "sweep", "--manifest", tiny_corpus.root / "manifest.json", "--sizes", "20,25",
                           "--budget-steps", 2, "--out", tmp_path / "s.csv", "--series", tmp_path / "s.json",
                           "--config", cfg)
        assert code == 0
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "window_ms,mae" and len(lines) == 3
        assert "minimum MAE at 25 ms" in out
        assert json.loads((tmp_path / "s.json").read_text())["window_ms"] == [20, 25]


class TestGradcheck:
    def test_passes(self, capsys):
        code, out, _ = run(capsys, "gradcheck", "--seed", 1)
        assert code == 0 and out.strip().endswith("PASS")
        assert "frontend.mu" in out and "classifier.out.w" in out

    def test_corrupted_tensor_fails(self, capsys):
        code, out, _ = run(capsys, "gradcheck", "--corrupt-tensor", "classifier.hidden.b")
        assert code == 1 and out.strip().endswith("FAIL")

    def test_full_mode_on_tiny_model(self, capsys, monkeypatch):
        import tacnet.cli as cli
        from tacnet.classifier import CompactCnnConfig
        from tacnet.model import TacNet

        orig = TacNet.create

        def tiny(**kw):
            kw["cnn"] = CompactCnnConfig(conv_blocks=((2, 3, 1), (2, 3, 2), (2, 3, 2)), hidden_dim=4,
                                         n_classes=3)
            kw.update(n_filters=4, kernel_width=31)
            return orig(**kw)

        monkeypatch.setattr(cli.TacNet, "create", staticmethod(tiny))
        code, out, _ = run(capsys, "gradcheck", "--full")
        assert code == 0 and "PASS" in out


class TestCount:
    def test_five_seconds_gives_200_lines(self, capsys, tiny_ckpt, tmp_path):
        wav = tmp_path / "a.wav"
        write_wav(wav, Waveform(0.1 * np.sin(np.arange(80000) * 0.05)))
        code, out, err = run(capsys, "count", "--wav", wav, "--ckpt", tiny_ckpt)
        lines = out.splitlines()
        assert code == 0 and len(lines) == 200
        assert lines[0].startswith("0.000,") and lines[1].startswith("25.000,")
        assert "real time" in err

    def test_smooth_one_is_identity(self, capsys, tiny_ckpt, tmp_path):
        wav = tmp_path / "b.wav"
        write_wav(wav, Waveform(0.2 * np.random.default_rng(0).standard_normal(16000).clip(-1, 1)))
        _, a, _ = run(capsys, "count", "--wav", wav, "--ckpt", tiny_ckpt)
        _, b, _ = run(capsys, "count", "--wav", wav, "--ckpt", tiny_ckpt, "--smooth", 1)
        assert a == b

    def test_smoothing_is_running_median(self, capsys, tiny_ckpt, tmp_path):
        wav = tmp_path / "c.wav"
        write_wav(wav, Waveform(0.3 * np.random.default_rng(1).standard_normal(16000).clip(-1, 1)))
        _, raw, _ = run(capsys, "count", "--wav", wav, "--ckpt", tiny_ckpt)
        _, sm, _ = run(capsys, "count", "--wav", wav, "--ckpt", tiny_ckpt, "--smooth", 3)
        preds = [int(line.split(",")[1]) for line in raw.splitlines()]
        expect = [sorted(preds[max(0, i - 2):i + 1])[(len(preds[max(0, i - 2):i + 1]) - 1) // 2]
                  for i in range(len(preds))]
        assert [int(line.split(",")[1]) for line in sm.splitlines()] == expect

    def test_noise_floor_counts_as_silence(self, capsys, tiny_ckpt, tmp_path):
        wav = tmp_path / "quiet.wav"
        write_wav(wav, Waveform(np.random.default_rng(0).uniform(-2e-3, 2e-3, 80000)))
        _, out, _ = run(capsys, "count", "--wav", wav, "--ckpt", tiny_ckpt)
        preds = [int(line.split(",")[1]) for line in out.splitlines()]
        assert preds.count(0) >= 0.9 * len(preds)

    def test_rate_mismatch(self, capsys, tiny_ckpt, tmp_path):
        wav = tmp_path / "r.wav"
        write_wav(wav, Waveform(np.zeros(8000), 8000))
        code, _, err = run(capsys, "count", "--wav", wav, "--ckpt", tiny_ckpt)
        assert code == 1 and "sample rate mismatch" in err

    def test_too_short(self, capsys, tiny_ckpt, tmp_path):
        wav = tmp_path / "s.wav"
        write_wav(wav, Waveform(np.zeros(100)))
        code, _, err = run(capsys, "count", "--wav", wav, "--ckpt", tiny_ckpt)
        assert code == 1 and "shorter than one window" in err
