"""Music effects encoder: 1-D conv network + contrastive (NT-Xent) objective.

Maps variable-length stereo audio to a fixed-size embedding via global
average pooling over time. A linear projection head is attached only during
contrastive pretraining.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .audio import StereoWaveform


@dataclass(frozen=True)
class EncoderConfig:
    block_channels: tuple = (32, 64, 128, 256, 512, 1024, 2048)
    kernel_size: int = 5
    block_stride: int = 4
    embedding_dim: int = 2048
    projection_dim: int = 512

    def __post_init__(self):
        channels = tuple(int(c) for c in self.block_channels)
        if not channels or any(c < 1 for c in channels):
            raise ValueError("block_channels must be non-empty positive counts")
        if channels[-1] != self.embedding_dim:
            raise ValueError("last block channel count must equal embedding_dim")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        object.__setattr__(self, "block_channels", channels)

    @classmethod
    def tiny(cls) -> "EncoderConfig":
        return cls(block_channels=(8, 16, 64), embedding_dim=64, projection_dim=32)


class ResidualConvBlock(nn.Module):
    """conv -> BN -> ReLU -> strided conv -> BN -> (+ shortcut) -> ReLU.

    The residual bridges the second (strided) conv; a 1x1 strided conv
    matches channels and rate on the shortcut when they differ.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv1d(in_channels, out_channels, kernel_size, padding=pad)
        self.bn1 = nn.BatchNorm1d(out_channels)
        self.conv2 = nn.Conv1d(out_channels, out_channels, kernel_size,
                               stride=stride, padding=pad)
        self.bn2 = nn.BatchNorm1d(out_channels)
        if stride != 1:
            self.shortcut = nn.Conv1d(out_channels, out_channels, 1, stride=stride)
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        h = F.relu(self.bn1(self.conv1(x)))
        return F.relu(self.bn2(self.conv2(h)) + self.shortcut(h))


class EffectsEncoder(nn.Module):
    """Stacked residual conv blocks, globally average-pooled over time."""

    def __init__(self, config: EncoderConfig = EncoderConfig()):
        super().__init__()
        self.config = config
        blocks = []
        in_ch = 2  # stereo input
        for out_ch in config.block_channels:
            blocks.append(ResidualConvBlock(in_ch, out_ch, config.kernel_size,
                                            config.block_stride))
            in_ch = out_ch
        self.blocks = nn.ModuleList(blocks)

    @property
    def min_input_length(self) -> int:
        return self.config.block_stride ** len(self.blocks)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (batch, 2, time) -> (batch, embedding_dim)."""
        if x.shape[-1] < self.min_input_length:
            raise ValueError(
                f"input of {x.shape[-1]} samples shorter than the receptive "
                f"minimum {self.min_input_length}"
            )
        for block in self.blocks:
            x = block(x)
        return x.mean(dim=-1)


class ProjectionHead(nn.Module):
    """Single linear map applied only during contrastive pretraining."""

    def __init__(self, config: EncoderConfig = EncoderConfig()):
        super().__init__()
        self.linear = nn.Linear(config.embedding_dim, config.projection_dim)

    def forward(self, e: torch.Tensor) -> torch.Tensor:
        return self.linear(e)


@torch.no_grad()
def encode(wf: StereoWaveform, model: EffectsEncoder) -> np.ndarray:
    """Inference-mode embedding of one waveform."""
    was_training = model.training
    model.eval()
    x = torch.from_numpy(wf.samples).float().unsqueeze(0)
    embedding = model(x).squeeze(0).numpy()
    if was_training:
        model.train()
    return embedding


def nt_xent_loss(projections: torch.Tensor, temperature: float = 0.5) -> torch.Tensor:
    """Normalized temperature-scaled cross-entropy over cosine similarities.

    projections: (2B, D) where rows i and i+B form a positive pair. Each of
    the 2B anchors treats its partner as the positive and the remaining
    2B - 2 rows as negatives; the loss is the mean over anchors.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n = projections.shape[0]
    if n < 4 or n % 2 != 0:
        raise ValueError("need an even number of projections with B >= 2 pairs")
    b = n // 2
    z = F.normalize(projections, dim=1)
    sim = z @ z.t() / temperature
    eye = torch.eye(n, dtype=torch.bool, device=projections.device)
    sim = sim.masked_fill(eye, float("-inf"))  # self-similarity is never a candidate
    targets = torch.cat(
        [torch.arange(b, 2 * b), torch.arange(0, b)]
    ).to(projections.device)
    return F.cross_entropy(sim, targets)
