"""Training orchestration: contrastive encoder pretraining, cloner and
discriminator adversarial training with a frozen encoder, checkpointing."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .audio import StereoWaveform, load_wav
from .cloner import ClonerConfig, MasteringCloner
from .dataset import build_triplet, make_contrastive_pair, triplet_rng
from .discriminator import DiscriminatorConfig, ProjectionDiscriminator, log_spectrogram
from .encoder import EffectsEncoder, EncoderConfig, ProjectionHead, nt_xent_loss
from .fx import ParamRanges
from .losses import MssSpec, RmsLossSpec, cloner_loss, hinge_d_loss, hinge_g_loss

FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    phase: str = "clone"  # pretrain | clone
    preset: str = "canonical"  # canonical | tiny
    batch_size: int = 64
    lr: float = 2e-4
    optimizer: str = "adam"
    epochs: int = 1
    adv_start_epoch: int = 100
    rho: float = 100.0
    temperature: float = 0.5
    segment_min_seconds: float = 5.0
    segment_max_seconds: float = 10.0
    segment_len: int = 131072
    triplet_count: int = 256
    lambda_adv: float = 1.0
    fft_sizes: tuple = (4096, 2048, 1024, 512)
    seed: int = 0
    checkpoint_dir: str = "checkpoints"
    checkpoint_every: int = 0  # steps between periodic checkpoints; 0 = final only
    log_every: int = 1
    max_steps: int = 0  # 0 = epochs * steps_per_epoch

    def __post_init__(self):
        if self.phase not in ("pretrain", "clone"):
            raise ValueError("phase must be 'pretrain' or 'clone'")
        if self.preset not in ("canonical", "tiny"):
            raise ValueError("preset must be 'canonical' or 'tiny'")
        if self.batch_size < 1 or self.lr <= 0 or self.epochs < 0:
            raise ValueError("batch_size, lr and epochs must be positive")
        if self.adv_start_epoch > max(self.epochs, self.adv_start_epoch):
            raise ValueError("adv_start_epoch must not exceed epochs")
        object.__setattr__(self, "fft_sizes", tuple(int(s) for s in self.fft_sizes))

    @classmethod
    def pretrain_defaults(cls, desk: bool = False) -> "TrainConfig":
        return cls(phase="pretrain", batch_size=16 if desk else 380,
                   preset="tiny" if desk else "canonical", epochs=100)

    @classmethod
    def clone_defaults(cls, desk: bool = False) -> "TrainConfig":
        return cls(phase="clone", batch_size=4 if desk else 64,
                   preset="tiny" if desk else "canonical", epochs=200)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        values = json.loads(Path(path).read_text())
        if "fft_sizes" in values:
            values["fft_sizes"] = tuple(values["fft_sizes"])
        return cls(**values)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig.tiny() if self.preset == "tiny" else EncoderConfig()

    def cloner_config(self) -> ClonerConfig:
        return ClonerConfig.tiny() if self.preset == "tiny" else ClonerConfig()

    def discriminator_config(self) -> DiscriminatorConfig:
        return (DiscriminatorConfig.tiny() if self.preset == "tiny"
                else DiscriminatorConfig())


def config_hash(config: TrainConfig) -> str:
    """Hash of the fields that define a training run's identity.

    Budget-only knobs (max_steps, checkpoint cadence, logging cadence) are
    excluded so a run may be resumed with a larger step budget.
    """
    fields = asdict(config)
    for budget_key in ("max_steps", "checkpoint_every", "log_every"):
        fields.pop(budget_key)
    payload = json.dumps(fields, sort_keys=True, default=list)
    return hashlib.sha256(payload.encode()).hexdigest()


def state_hash(module: torch.nn.Module) -> str:
    """Hash of all parameters and buffers; detects any training update."""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def _capture_rng(rng: np.random.Generator) -> dict:
    return {
        "torch": torch.get_rng_state(),
        "numpy": rng.bit_generator.state,
    }


def _restore_rng(state: dict, rng: np.random.Generator):
    torch.set_rng_state(state["torch"])
    rng.bit_generator.state = state["numpy"]


def save_checkpoint(path, payload: dict):
    payload = {"format_version": FORMAT_VERSION, **payload}
    torch.save(payload, path)


def load_checkpoint(path, expected_kind: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such checkpoint: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path}: not a remasterkit checkpoint")
    if payload["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {payload['format_version']} "
            f"!= supported {FORMAT_VERSION}"
        )
    if payload.get("kind") != expected_kind:
        raise CheckpointError(
            f"{path}: checkpoint kind {payload.get('kind')!r}, expected "
            f"{expected_kind!r}"
        )
    return payload


def load_encoder(path):
    payload = load_checkpoint(path, "encoder")
    config = EncoderConfig(**payload["encoder_config"])
    model = EffectsEncoder(config)
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, payload


def load_cloner(path):
    payload = load_checkpoint(path, "cloner")
    config = ClonerConfig(**payload["cloner_config"])
    model = MasteringCloner(config)
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, payload


class JsonlLogger:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def log(self, record: dict):
        with open(self.path, "a") as f:
            f.write(json.dumps(record) + "\n")


def _steps_per_epoch(config: TrainConfig, dataset_size: int) -> int:
    return max(1, math.ceil(dataset_size / config.batch_size))


def _total_steps(config: TrainConfig, steps_per_epoch: int) -> int:
    if config.max_steps > 0:
        return config.max_steps
    return config.epochs * steps_per_epoch


# ---------------------------------------------------------------------------
# Contrastive pretraining
# ---------------------------------------------------------------------------

def pretrain_encoder(config: TrainConfig, manifest: list, resume=None) -> Path:
    """Contrastive pretraining of the effects encoder; returns the checkpoint path."""
    if len(manifest) < 2:
        raise ValueError("need at least 2 songs for contrastive pretraining")
    if config.batch_size < 2:
        raise ValueError("contrastive batch needs B >= 2 (no negatives otherwise)")

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    enc_config = config.encoder_config()
    encoder = EffectsEncoder(enc_config)
    head = ProjectionHead(enc_config)
    optimizer = torch.optim.Adam(
        list(encoder.parameters()) + list(head.parameters()), lr=config.lr
    )

    start_step = 0
    loss_history = []
    if resume is not None:
        payload = load_checkpoint(resume, "encoder")
        if payload["config_hash"] != config_hash(config):
            raise CheckpointError("checkpoint was produced with a different config")
        encoder.load_state_dict(payload["model_state"])
        head.load_state_dict(payload["projection_state"])
        optimizer.load_state_dict(payload["optimizer_state"])
        _restore_rng(payload["rng_state"], rng)
        start_step = payload["step"]
        loss_history = list(payload["loss_history"])

    out_dir = Path(config.checkpoint_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "encoder.ckpt"
    logger = JsonlLogger(out_dir / "pretrain_log.jsonl")

    steps_per_epoch = _steps_per_epoch(config, len(manifest))
    total = _total_steps(config, steps_per_epoch)
    waveforms = {}

    def song_waveform(song):
        if song.path not in waveforms:
            waveforms[song.path] = load_wav(song.path)
        return waveforms[song.path]

    def write_checkpoint(step):
        save_checkpoint(ckpt_path, {
            "kind": "encoder",
            "encoder_config": asdict(enc_config),
            "model_state": encoder.state_dict(),
            "projection_state": head.state_dict(),
            "optimizer_state": optimizer.state_dict(),
            "config": asdict(config),
            "config_hash": config_hash(config),
            "rng_state": _capture_rng(rng),
            "step": step,
            "loss_history": loss_history,
        })

    encoder.train()
    head.train()
    for step in range(start_step, total):
        picks = rng.choice(len(manifest), size=config.batch_size,
                           replace=len(manifest) < config.batch_size)
        first, second = [], []
        for song_idx in picks:
            song = manifest[int(song_idx)]
            seg1, seg2 = make_contrastive_pair(
                song, rng, config.segment_min_seconds, config.segment_max_seconds,
                song_waveform=song_waveform(song),
            )
            first.append(seg1)
            second.append(seg2)
        embeddings = []
        for seg in first + second:
            x = torch.from_numpy(seg.samples).float().unsqueeze(0)
            embeddings.append(encoder(x))
        projections = head(torch.cat(embeddings, dim=0))
        loss = nt_xent_loss(projections, config.temperature)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        loss_value = float(loss.detach())
        loss_history.append(loss_value)
        if (step + 1) % config.log_every == 0:
            logger.log({"step": step + 1, "phase": "pretrain", "loss": loss_value})
        if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            write_checkpoint(step + 1)

    write_checkpoint(total)
    return ckpt_path


# ---------------------------------------------------------------------------
# Cloner / discriminator training
# ---------------------------------------------------------------------------

def _fabricate_training_set(config: TrainConfig, manifest: list,
                            ranges: ParamRanges):
    """Deterministic in-memory triplet set; conditions come later (frozen encoder)."""
    waveforms = {}
    a1s, a2s, b2s = [], [], []
    for i in range(config.triplet_count):
        song = manifest[i % len(manifest)]
        if song.path not in waveforms:
            waveforms[song.path] = load_wav(song.path)
        triplet = build_triplet(
            song, triplet_rng(config.seed, i), segment_len=config.segment_len,
            ranges=ranges, song_waveform=waveforms[song.path],
        )
        a1s.append(triplet.input_a1.samples)
        a2s.append(triplet.target_a2.samples)
        b2s.append(triplet.reference_b2.samples)
    to_tensor = lambda arrs: torch.from_numpy(np.stack(arrs)).float()
    return to_tensor(a1s), to_tensor(a2s), to_tensor(b2s)


def train_cloner(config: TrainConfig, manifest: list, encoder_ckpt,
                 resume=None, ranges: ParamRanges = ParamRanges()):
    """Train the mastering cloner (and, after adv_start_epoch, the
    discriminator) against a frozen effects encoder.

    Returns (cloner_checkpoint_path, discriminator_checkpoint_path).
    """
    if not manifest:
        raise ValueError("manifest is empty")
    encoder, _ = load_encoder(encoder_ckpt)
    encoder.eval()
    for p in encoder.parameters():
        p.requires_grad_(False)

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    cloner_cfg = config.cloner_config()
    disc_cfg = config.discriminator_config()
    if cloner_cfg.condition_dim != encoder.config.embedding_dim:
        raise ValueError(
            f"cloner condition dim {cloner_cfg.condition_dim} != encoder "
            f"embedding dim {encoder.config.embedding_dim}"
        )
    cloner = MasteringCloner(cloner_cfg)
    disc = ProjectionDiscriminator(disc_cfg)
    g_opt = torch.optim.Adam(cloner.parameters(), lr=config.lr)
    d_opt = torch.optim.Adam(disc.parameters(), lr=config.lr)

    a1, a2, b2 = _fabricate_training_set(config, manifest, ranges)
    with torch.no_grad():
        conditions = torch.cat([
            encoder(b2[i : i + 1]) for i in range(b2.shape[0])
        ], dim=0)

    rms_spec = RmsLossSpec(rho=config.rho)
    mss_spec = MssSpec(fft_sizes=config.fft_sizes)

    start_step = 0
    loss_history = []
    if resume is not None:
        payload = load_checkpoint(resume, "cloner")
        if payload["config_hash"] != config_hash(config):
            raise CheckpointError("checkpoint was produced with a different config")
        cloner.load_state_dict(payload["model_state"])
        disc.load_state_dict(payload["discriminator_state"])
        g_opt.load_state_dict(payload["g_optimizer_state"])
        d_opt.load_state_dict(payload["d_optimizer_state"])
        _restore_rng(payload["rng_state"], rng)
        start_step = payload["step"]
        loss_history = list(payload["loss_history"])

    out_dir = Path(config.checkpoint_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cloner_path = out_dir / "cloner.ckpt"
    disc_path = out_dir / "discriminator.ckpt"
    logger = JsonlLogger(out_dir / "clone_log.jsonl")

    steps_per_epoch = _steps_per_epoch(config, config.triplet_count)
    total = _total_steps(config, steps_per_epoch)
    adv_start_step = config.adv_start_epoch * steps_per_epoch

    def write_checkpoints(step):
        save_checkpoint(cloner_path, {
            "kind": "cloner",
            "cloner_config": asdict(cloner_cfg),
            "model_state": cloner.state_dict(),
            "discriminator_state": disc.state_dict(),
            "g_optimizer_state": g_opt.state_dict(),
            "d_optimizer_state": d_opt.state_dict(),
            "config": asdict(config),
            "config_hash": config_hash(config),
            "rng_state": _capture_rng(rng),
            "step": step,
            "loss_history": loss_history,
        })
        save_checkpoint(disc_path, {
            "kind": "discriminator",
            "discriminator_config": asdict(disc_cfg),
            "model_state": disc.state_dict(),
            "config_hash": config_hash(config),
            "step": step,
        })

    cloner.train()
    disc.train()
    for step in range(start_step, total):
        idx = torch.from_numpy(
            rng.integers(0, a1.shape[0], size=config.batch_size)
        ).long()
        a1b, a2b, condb = a1[idx], a2[idx], conditions[idx]
        adversarial = step >= adv_start_step
        record = {"step": step + 1, "phase": "clone"}

        if adversarial:
            with torch.no_grad():
                fake = cloner(a1b, condb)
            real_scores = disc(log_spectrogram(a2b), condb)
            fake_scores = disc(log_spectrogram(fake), condb)
            d_loss = hinge_d_loss(real_scores, fake_scores)
            d_opt.zero_grad()
            d_loss.backward()
            d_opt.step()
            record["loss_d"] = float(d_loss.detach())

        a2p = cloner(a1b, condb)
        recon = cloner_loss(a2b, a2p, rms_spec, mss_spec)
        g_loss = recon
        if adversarial:
            g_adv = hinge_g_loss(disc(log_spectrogram(a2p), condb))
            g_loss = recon + config.lambda_adv * g_adv
            record["loss_g_adv"] = float(g_adv.detach())
        g_opt.zero_grad()
        g_loss.backward()
        g_opt.step()

        loss_history.append(float(recon.detach()))
        record["loss_recon"] = float(recon.detach())
        record["loss_total"] = float(g_loss.detach())
        if (step + 1) % config.log_every == 0:
            logger.log(record)
        if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            write_checkpoints(step + 1)

    write_checkpoints(total)
    return cloner_path, disc_path
