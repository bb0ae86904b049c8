import json
from dataclasses import replace

import numpy as np
import pytest
import torch

from remasterkit.dataset import scan_corpus
from remasterkit.training import (
    CheckpointError,
    TrainConfig,
    config_hash,
    load_checkpoint,
    load_cloner,
    load_encoder,
    pretrain_encoder,
    save_checkpoint,
    state_hash,
    train_cloner,
)

torch.set_num_threads(1)


def _pretrain_config(tmp_dir, **overrides):
    base = dict(
        phase="pretrain", preset="tiny", batch_size=2, epochs=1,
        segment_min_seconds=0.5, segment_max_seconds=0.9,
        checkpoint_dir=str(tmp_dir), seed=11, max_steps=2,
    )
    base.update(overrides)
    return TrainConfig(**base)


def _clone_config(tmp_dir, **overrides):
    base = dict(
        phase="clone", preset="tiny", batch_size=2, epochs=1,
        segment_len=16384, triplet_count=4, fft_sizes=(1024, 512),
        checkpoint_dir=str(tmp_dir), seed=12, max_steps=2,
        adv_start_epoch=100,
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def encoder_ckpt(small_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("enc")
    manifest = scan_corpus(small_corpus)
    return pretrain_encoder(_pretrain_config(out, max_steps=1), manifest)


class TestTrainConfig:
    def test_invariants(self):
        with pytest.raises(ValueError):
            TrainConfig(phase="finetune")
        with pytest.raises(ValueError):
            TrainConfig(preset="huge")
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)

    def test_from_file_roundtrip(self, tmp_path):
        config = TrainConfig(phase="pretrain", preset="tiny", batch_size=3,
                             fft_sizes=(1024, 512), seed=9)
        path = tmp_path / "config.json"
        path.write_text(json.dumps({
            "phase": "pretrain", "preset": "tiny", "batch_size": 3,
            "fft_sizes": [1024, 512], "seed": 9,
        }))
        assert TrainConfig.from_file(path) == config

    def test_hash_ignores_budget_knobs(self):
        a = TrainConfig(max_steps=10, checkpoint_every=5, log_every=2)
        b = TrainConfig(max_steps=99, checkpoint_every=0, log_every=1)
        assert config_hash(a) == config_hash(b)

    def test_hash_tracks_substantive_fields(self):
        assert config_hash(TrainConfig(lr=2e-4)) != config_hash(TrainConfig(lr=1e-4))
        assert config_hash(TrainConfig(seed=0)) != config_hash(TrainConfig(seed=1))


class TestCheckpointIO:
    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="no such checkpoint"):
            load_checkpoint(tmp_path / "none.ckpt", "encoder")

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"garbage bytes, not a checkpoint")
        with pytest.raises(CheckpointError, match="corrupt"):
            load_checkpoint(path, "encoder")

    def test_wrong_kind(self, tmp_path):
        path = tmp_path / "kind.ckpt"
        save_checkpoint(path, {"kind": "cloner"})
        with pytest.raises(CheckpointError, match="kind"):
            load_checkpoint(path, "encoder")

    def test_wrong_format_version(self, tmp_path):
        path = tmp_path / "ver.ckpt"
        torch.save({"format_version": 999, "kind": "encoder"}, path)
        with pytest.raises(CheckpointError, match="format version"):
            load_checkpoint(path, "encoder")

    def test_not_a_checkpoint_dict(self, tmp_path):
        path = tmp_path / "plain.ckpt"
        torch.save({"weights": 1}, path)
        with pytest.raises(CheckpointError, match="not a remasterkit checkpoint"):
            load_checkpoint(path, "encoder")


class TestPretrain:
    def test_batch_one_rejected(self, small_corpus, tmp_path):
        manifest = scan_corpus(small_corpus)
        with pytest.raises(ValueError, match="B >= 2"):
            pretrain_encoder(_pretrain_config(tmp_path, batch_size=1), manifest)

    def test_single_song_rejected(self, small_corpus, tmp_path):
        manifest = scan_corpus(small_corpus)[:1]
        with pytest.raises(ValueError, match="at least 2 songs"):
            pretrain_encoder(_pretrain_config(tmp_path), manifest)

    def test_run_writes_checkpoint_and_log(self, small_corpus, tmp_path):
        manifest = scan_corpus(small_corpus)
        config = _pretrain_config(tmp_path, max_steps=3)
        ckpt = pretrain_encoder(config, manifest)
        assert ckpt.exists()
        encoder, payload = load_encoder(ckpt)
        assert payload["step"] == 3
        assert len(payload["loss_history"]) == 3
        log_lines = (tmp_path / "pretrain_log.jsonl").read_text().splitlines()
        assert len(log_lines) == 3
        assert json.loads(log_lines[0]) == pytest.approx(
            {"step": 1, "phase": "pretrain",
             "loss": payload["loss_history"][0]}
        )

    def test_resume_matches_uninterrupted_run(self, small_corpus, tmp_path):
        manifest = scan_corpus(small_corpus)
        # one uninterrupted 4-step run ...
        straight = pretrain_encoder(
            _pretrain_config(tmp_path / "straight", max_steps=4), manifest
        )
        # ... versus 2 steps, stop, resume to 4
        first = pretrain_encoder(
            _pretrain_config(tmp_path / "resumed", max_steps=2), manifest
        )
        resumed = pretrain_encoder(
            _pretrain_config(tmp_path / "resumed", max_steps=4), manifest,
            resume=first,
        )
        enc_a, payload_a = load_encoder(straight)
        enc_b, payload_b = load_encoder(resumed)
        assert state_hash(enc_a) == state_hash(enc_b)
        assert payload_a["loss_history"] == payload_b["loss_history"]

    def test_resume_rejects_different_config(self, small_corpus, tmp_path):
        manifest = scan_corpus(small_corpus)
        ckpt = pretrain_encoder(_pretrain_config(tmp_path), manifest)
        other = _pretrain_config(tmp_path, seed=999)
        with pytest.raises(CheckpointError, match="different config"):
            pretrain_encoder(other, manifest, resume=ckpt)


class TestTrainCloner:
    def test_empty_manifest_rejected(self, tmp_path, encoder_ckpt):
        with pytest.raises(ValueError, match="manifest is empty"):
            train_cloner(_clone_config(tmp_path), [], encoder_ckpt)

    def test_condition_dim_mismatch_rejected(self, small_corpus, tmp_path,
                                             encoder_ckpt):
        manifest = scan_corpus(small_corpus)
        config = _clone_config(tmp_path, preset="canonical")
        with pytest.raises(ValueError, match="condition dim"):
            train_cloner(config, manifest, encoder_ckpt)

    def test_encoder_stays_frozen(self, small_corpus, tmp_path, encoder_ckpt):
        manifest = scan_corpus(small_corpus)
        encoder_before, _ = load_encoder(encoder_ckpt)
        before = state_hash(encoder_before)
        train_cloner(_clone_config(tmp_path), manifest, encoder_ckpt)
        encoder_after, _ = load_encoder(encoder_ckpt)
        assert state_hash(encoder_after) == before

    def test_reconstruction_only_before_adv_start(self, small_corpus, tmp_path,
                                                  encoder_ckpt):
        manifest = scan_corpus(small_corpus)
        train_cloner(_clone_config(tmp_path), manifest, encoder_ckpt)
        records = [json.loads(line) for line in
                   (tmp_path / "clone_log.jsonl").read_text().splitlines()]
        assert len(records) == 2
        for record in records:
            assert "loss_recon" in record and "loss_total" in record
            assert "loss_d" not in record and "loss_g_adv" not in record
            assert record["loss_total"] == record["loss_recon"]

    def test_adversarial_from_epoch_zero(self, small_corpus, tmp_path,
                                         encoder_ckpt):
        manifest = scan_corpus(small_corpus)
        config = _clone_config(tmp_path, adv_start_epoch=0)
        cloner_path, disc_path = train_cloner(config, manifest, encoder_ckpt)
        records = [json.loads(line) for line in
                   (tmp_path / "clone_log.jsonl").read_text().splitlines()]
        for record in records:
            assert "loss_d" in record and "loss_g_adv" in record
            assert record["loss_total"] == pytest.approx(
                record["loss_recon"] + config.lambda_adv * record["loss_g_adv"]
            )
        assert cloner_path.exists() and disc_path.exists()
        disc_payload = load_checkpoint(disc_path, "discriminator")
        assert disc_payload["step"] == 2

    def test_checkpoint_roundtrip_preserves_weights(self, small_corpus, tmp_path,
                                                    encoder_ckpt):
        manifest = scan_corpus(small_corpus)
        cloner_path, _ = train_cloner(_clone_config(tmp_path), manifest,
                                      encoder_ckpt)
        model, payload = load_cloner(cloner_path)
        again = tmp_path / "again.ckpt"
        save_checkpoint(again, {k: v for k, v in payload.items()
                                if k != "format_version"})
        model2, _ = load_cloner(again)
        assert state_hash(model) == state_hash(model2)

    def test_resume_matches_uninterrupted_run(self, small_corpus, tmp_path,
                                              encoder_ckpt):
        manifest = scan_corpus(small_corpus)
        straight_path, _ = train_cloner(
            _clone_config(tmp_path / "straight", max_steps=4), manifest,
            encoder_ckpt,
        )
        first_path, _ = train_cloner(
            _clone_config(tmp_path / "resumed", max_steps=2), manifest,
            encoder_ckpt,
        )
        resumed_path, _ = train_cloner(
            _clone_config(tmp_path / "resumed", max_steps=4), manifest,
            encoder_ckpt, resume=first_path,
        )
        model_a, payload_a = load_cloner(straight_path)
        model_b, payload_b = load_cloner(resumed_path)
        assert state_hash(model_a) == state_hash(model_b)
        assert payload_a["loss_history"] == payload_b["loss_history"]
