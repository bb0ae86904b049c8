import json

import numpy as np
import pytest

from remasterkit.audio import load_wav, save_wav
from remasterkit.cli import main
from remasterkit.dataset import read_index
from remasterkit.fx import FxParams, ParamRanges, params_from_seed


def _write_identity_params(path):
    path.write_text(params_from_seed(0, ParamRanges.identity()).to_json())


class TestExitCodes:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_command(self, capsys):
        assert main(["polish"]) == 1

    def test_missing_required_flag_names_it(self, capsys):
        code = main(["remaster", "--input", "a.wav", "--encoder", "e",
                     "--cloner", "c", "--out", "o.wav"])
        assert code == 1
        assert "--reference" in capsys.readouterr().err

    def test_runtime_error_is_exit_two(self, tmp_path, capsys):
        code = main(["fabricate", "--input-dir", str(tmp_path / "missing"),
                     "--out", str(tmp_path / "out"), "--count", "1"])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_bad_int_argument(self, tmp_path):
        assert main(["fabricate", "--input-dir", str(tmp_path), "--out",
                     str(tmp_path), "--count", "many"]) == 1


class TestFxCommands:
    def test_sample_writes_replayable_params(self, tmp_path):
        out = tmp_path / "params.json"
        assert main(["fx", "sample", "--seed", "77", "--out", str(out)]) == 0
        params = FxParams.from_json(out.read_text())
        assert params == params_from_seed(77)

    def test_apply_identity_params(self, small_corpus, tmp_path):
        params_path = tmp_path / "identity.json"
        _write_identity_params(params_path)
        src = sorted(small_corpus.glob("*.wav"))[0]
        dst = tmp_path / "out.wav"
        assert main(["fx", "apply", "--params", str(params_path),
                     str(src), str(dst)]) == 0
        original = load_wav(src)
        processed = load_wav(dst)
        assert processed.num_samples == original.num_samples
        # identity chain is all-pass (the crossover shifts phase, not
        # magnitude): energy is preserved even though samples differ
        rms_in = np.sqrt(np.mean(original.samples**2))
        rms_out = np.sqrt(np.mean(processed.samples**2))
        assert rms_out == pytest.approx(rms_in, rel=1e-2)

    def test_apply_missing_params_file(self, small_corpus, tmp_path):
        src = sorted(small_corpus.glob("*.wav"))[0]
        assert main(["fx", "apply", "--params", str(tmp_path / "nope.json"),
                     str(src), str(tmp_path / "o.wav")]) == 2


class TestFabricateCommand:
    def test_writes_index_and_wavs(self, small_corpus, tmp_path):
        out = tmp_path / "fab"
        assert main(["fabricate", "--input-dir", str(small_corpus),
                     "--out", str(out), "--count", "3",
                     "--seed", "5", "--segment-len", "16384"]) == 0
        records = read_index(out / "index.jsonl")
        assert len(records) == 3
        assert len(list(out.glob("*.wav"))) == 9


class TestTrainingCommands:
    def _config_file(self, tmp_path, phase, **overrides):
        values = {
            "phase": phase, "preset": "tiny", "batch_size": 2, "epochs": 1,
            "max_steps": 1, "seed": 3,
        }
        if phase == "pretrain":
            values.update(segment_min_seconds=0.5, segment_max_seconds=0.9)
        else:
            values.update(segment_len=16384, triplet_count=2,
                          fft_sizes=[1024, 512])
        values.update(overrides)
        path = tmp_path / f"{phase}.json"
        path.write_text(json.dumps(values))
        return path

    def test_pretrain_then_train_then_remaster(self, small_corpus, tmp_path):
        enc_dir = tmp_path / "enc"
        config = self._config_file(tmp_path, "pretrain")
        assert main(["pretrain-encoder", "--config", str(config),
                     "--data", str(small_corpus), "--out", str(enc_dir)]) == 0
        assert (enc_dir / "encoder.ckpt").exists()

        clo_dir = tmp_path / "clo"
        config = self._config_file(tmp_path, "clone")
        assert main(["train-cloner", "--config", str(config),
                     "--data", str(small_corpus), "--out", str(clo_dir),
                     "--encoder", str(enc_dir / "encoder.ckpt")]) == 0
        assert (clo_dir / "cloner.ckpt").exists()

        src = sorted(small_corpus.glob("*.wav"))
        out_wav = tmp_path / "remastered.wav"
        assert main(["remaster", "--input", str(src[0]),
                     "--reference", str(src[1]),
                     "--encoder", str(enc_dir / "encoder.ckpt"),
                     "--cloner", str(clo_dir / "cloner.ckpt"),
                     "--out", str(out_wav), "--window", "16384"]) == 0
        original = load_wav(src[0])
        remastered = load_wav(out_wav)
        assert remastered.num_samples == original.num_samples

    def test_config_env_fallback(self, small_corpus, tmp_path, monkeypatch):
        config = self._config_file(tmp_path, "pretrain")
        monkeypatch.setenv("REMASTERKIT_CONFIG", str(config))
        out = tmp_path / "env_enc"
        assert main(["pretrain-encoder", "--data", str(small_corpus),
                     "--out", str(out)]) == 0
        assert (out / "encoder.ckpt").exists()

    def test_seed_override(self, small_corpus, tmp_path):
        config = self._config_file(tmp_path, "pretrain")
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out, seed in ((out_a, "3"), (out_b, "4")):
            assert main(["pretrain-encoder", "--config", str(config),
                         "--data", str(small_corpus), "--out", str(out),
                         "--seed", seed]) == 0
        from remasterkit.training import load_encoder, state_hash
        enc_a, _ = load_encoder(out_a / "encoder.ckpt")
        enc_b, _ = load_encoder(out_b / "encoder.ckpt")
        assert state_hash(enc_a) != state_hash(enc_b)

    def test_missing_encoder_checkpoint(self, small_corpus, tmp_path):
        config = self._config_file(tmp_path, "clone")
        assert main(["train-cloner", "--config", str(config),
                     "--data", str(small_corpus), "--out", str(tmp_path / "x"),
                     "--encoder", str(tmp_path / "missing.ckpt")]) == 2


class TestEvaluateCommand:
    def test_evaluate_writes_report(self, small_corpus, tmp_path):
        enc_dir = tmp_path / "enc"
        config = tmp_path / "pre.json"
        config.write_text(json.dumps({
            "phase": "pretrain", "preset": "tiny", "batch_size": 2,
            "max_steps": 1, "segment_min_seconds": 0.5,
            "segment_max_seconds": 0.9,
        }))
        assert main(["pretrain-encoder", "--config", str(config),
                     "--data", str(small_corpus), "--out", str(enc_dir)]) == 0
        clo_dir = tmp_path / "clo"
        config = tmp_path / "clo.json"
        config.write_text(json.dumps({
            "phase": "clone", "preset": "tiny", "batch_size": 2,
            "max_steps": 1, "segment_len": 16384, "triplet_count": 2,
            "fft_sizes": [1024, 512],
        }))
        assert main(["train-cloner", "--config", str(config),
                     "--data", str(small_corpus), "--out", str(clo_dir),
                     "--encoder", str(enc_dir / "encoder.ckpt")]) == 0

        fab = tmp_path / "fab"
        assert main(["fabricate", "--input-dir", str(small_corpus),
                     "--out", str(fab), "--count", "2",
                     "--segment-len", "32768"]) == 0
        report_path = tmp_path / "report.json"
        assert main(["evaluate", "--index", str(fab / "index.jsonl"),
                     "--encoder", str(enc_dir / "encoder.ckpt"),
                     "--cloner", str(clo_dir / "cloner.ckpt"),
                     "--out", str(report_path), "--window", "32768"]) == 0
        report = json.loads(report_path.read_text())
        assert len(report["records"]) == 2
        assert set(report["aggregates"]) == {"delta_rms", "delta_rms_side",
                                             "fw_snr_db", "stoi"}
        assert report["metadata"]["encoder_step"] == 1
