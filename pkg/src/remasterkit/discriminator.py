"""Projection discriminator on stereo log-magnitude spectrograms.

The critic scores a spectrogram unconditionally through a 2-D conv stack and
adds an inner product between the pooled feature and an MLP-projected
reference embedding from the (frozen) effects encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .audio import StereoWaveform

SPECTROGRAM_FFT = 2048
SPECTROGRAM_HOP = 512  # 75% overlap
SPECTROGRAM_EPS = 1e-7


def log_spectrogram(x: torch.Tensor) -> torch.Tensor:
    """Stereo log-magnitude spectrogram of (B, 2, T): Hamming 2048, hop 512.

    Returns (B, 2, 1025, frames) with frames = 1 + (T - 2048) // 512.
    """
    if x.shape[-1] < SPECTROGRAM_FFT:
        raise ValueError(f"input shorter than one {SPECTROGRAM_FFT}-sample window")
    b, c, t = x.shape
    window = torch.hamming_window(SPECTROGRAM_FFT, periodic=True,
                                  device=x.device, dtype=x.dtype)
    spec = torch.stft(x.reshape(b * c, t), n_fft=SPECTROGRAM_FFT,
                      hop_length=SPECTROGRAM_HOP, win_length=SPECTROGRAM_FFT,
                      window=window, center=False, return_complex=True)
    mag = spec.abs().reshape(b, c, spec.shape[-2], spec.shape[-1])
    return torch.log(mag + SPECTROGRAM_EPS)


def spectrogram(wf: StereoWaveform) -> np.ndarray:
    """Log-magnitude spectrogram of one waveform as (2, 1025, frames)."""
    x = torch.from_numpy(wf.samples).float().unsqueeze(0)
    return log_spectrogram(x).squeeze(0).numpy()


@dataclass(frozen=True)
class DiscriminatorConfig:
    block_channels: tuple = (32, 64, 128, 256, 512, 1024)
    kernel: int = 3
    stride: int = 2
    condition_dim: int = 2048
    projected_dim: int = 1024

    def __post_init__(self):
        channels = tuple(int(c) for c in self.block_channels)
        if channels[-1] != self.projected_dim:
            raise ValueError("last block channel count must equal projected_dim")
        object.__setattr__(self, "block_channels", channels)

    @classmethod
    def tiny(cls) -> "DiscriminatorConfig":
        return cls(block_channels=(8, 16, 32), condition_dim=64, projected_dim=32)


class ConvBlock2d(nn.Module):
    """Two 3x3 convs (second strided), BN + ReLU, no residual connection."""

    def __init__(self, in_channels, out_channels, kernel, stride):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv2d(in_channels, out_channels, kernel, padding=pad)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, kernel,
                               stride=stride, padding=pad)
        self.bn2 = nn.BatchNorm2d(out_channels)

    def forward(self, x):
        x = F.relu(self.bn1(self.conv1(x)))
        return F.relu(self.bn2(self.conv2(x)))


class ProjectionDiscriminator(nn.Module):
    def __init__(self, config: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.config = config
        blocks = []
        in_ch = 2
        for out_ch in config.block_channels:
            blocks.append(ConvBlock2d(in_ch, out_ch, config.kernel, config.stride))
            in_ch = out_ch
        self.blocks = nn.ModuleList(blocks)
        self.unconditional = nn.Linear(config.projected_dim, 1)
        self.condition_mlp = nn.Sequential(
            nn.Linear(config.condition_dim, config.projected_dim),
            nn.ReLU(),
            nn.Linear(config.projected_dim, config.projected_dim),
        )

    def features(self, spec: torch.Tensor) -> torch.Tensor:
        """Conv stack + global average pool over frequency and time."""
        h = spec
        for block in self.blocks:
            h = block(h)
        return h.mean(dim=(-2, -1))

    def project_condition(self, condition: torch.Tensor) -> torch.Tensor:
        return self.condition_mlp(condition)

    def score_from_parts(self, phi: torch.Tensor, projected: torch.Tensor) -> torch.Tensor:
        return self.unconditional(phi).squeeze(-1) + (phi * projected).sum(dim=-1)

    def forward(self, spec: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        """spec: (B, 2, freq, frames); condition: (B, condition_dim) -> (B,) scores."""
        if condition.shape[-1] != self.config.condition_dim:
            raise ValueError(
                f"condition dim {condition.shape[-1]} != configured "
                f"{self.config.condition_dim}"
            )
        phi = self.features(spec)
        return self.score_from_parts(phi, self.project_condition(condition))
