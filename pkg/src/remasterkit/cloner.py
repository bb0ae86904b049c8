"""Mastering cloner: a Wave-U-Net variant conditioned on a reference embedding.

Modifications relative to the stock Wave-U-Net: a stride-1 first layer that
contributes no skip connection, anti-aliased (oversampled) leaky ReLU
activations, FiLM conditioning at the end of every decoder block, and a
kernel-1 linear output head hard-clamped to [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .audio import FilterSpec, StereoWaveform
from .encoder import EffectsEncoder


@dataclass(frozen=True)
class ClonerConfig:
    num_levels: int = 6
    base_channels: int = 32
    down_kernel: int = 15
    up_kernel: int = 5
    leaky_slope: float = 0.2
    condition_dim: int = 2048

    def __post_init__(self):
        if self.num_levels < 1:
            raise ValueError("num_levels must be >= 1")
        if self.down_kernel % 2 == 0 or self.up_kernel % 2 == 0:
            raise ValueError("kernels must be odd")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError("leaky_slope must lie in (0, 1)")

    def channels(self, level: int) -> int:
        """Linear channel growth; level 0 is the stride-1 first layer."""
        return self.base_channels * (level + 1)

    @classmethod
    def tiny(cls) -> "ClonerConfig":
        return cls(num_levels=3, base_channels=8, condition_dim=64)


class Resampler2(nn.Module):
    """Differentiable anti-aliased rate-2 up/down sampler for (B, C, T) maps."""

    def __init__(self, spec: FilterSpec = FilterSpec()):
        super().__init__()
        kernel = torch.from_numpy(spec.coefficients().astype(np.float32))
        self.register_buffer("kernel", kernel)
        self.delay = spec.taps // 2

    def _filter(self, x: torch.Tensor) -> torch.Tensor:
        channels = x.shape[1]
        weight = self.kernel.to(x.dtype).view(1, 1, -1).expand(channels, 1, -1)
        taps = weight.shape[-1]
        x = F.pad(x, (self.delay, taps - 1 - self.delay))
        return F.conv1d(x, weight, groups=channels)

    def up(self, x: torch.Tensor) -> torch.Tensor:
        b, c, t = x.shape
        stuffed = x.new_zeros(b, c, 2 * t)
        stuffed[..., ::2] = x
        return 2.0 * self._filter(stuffed)

    def down(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % 2 != 0:
            raise ValueError("downsampling requires an even time length")
        return self._filter(x)[..., ::2]


def alias_free_act(x: torch.Tensor, resampler: Resampler2, slope: float = 0.2) -> torch.Tensor:
    """Oversampled leaky ReLU: upsample x2, activate, downsample x2."""
    if x.shape[-1] % 2 != 0:
        raise ValueError("alias_free_act requires an even time length")
    return resampler.down(F.leaky_relu(resampler.up(x), slope))


def _act_any_length(x, resampler, slope):
    # bottleneck maps can have odd lengths; pad one sample for the resamplers
    if x.shape[-1] % 2 != 0:
        return alias_free_act(F.pad(x, (0, 1)), resampler, slope)[..., :-1]
    return alias_free_act(x, resampler, slope)


def film(x: torch.Tensor, scale: torch.Tensor, shift: torch.Tensor) -> torch.Tensor:
    """Per-channel affine modulation: out[., c, t] = scale[., c] * x[., c, t] + shift[., c]."""
    if scale.shape[-1] != x.shape[1] or shift.shape[-1] != x.shape[1]:
        raise ValueError(
            f"FiLM parameter length {scale.shape[-1]} does not match {x.shape[1]} channels"
        )
    return scale.unsqueeze(-1) * x + shift.unsqueeze(-1)


class FilmProducer(nn.Module):
    """Linear map from the condition embedding to per-channel scale and shift.

    Weights start small and biases at (scale=1, shift=0) so an untrained
    model is close to condition-neutral while the conditioning path stays
    live from the first step.
    """

    def __init__(self, condition_dim: int, channels: int):
        super().__init__()
        self.linear = nn.Linear(condition_dim, 2 * channels)
        nn.init.normal_(self.linear.weight, std=1e-2)
        with torch.no_grad():
            self.linear.bias[:channels] = 1.0
            self.linear.bias[channels:] = 0.0
        self.channels = channels

    def forward(self, condition: torch.Tensor):
        out = self.linear(condition)
        return out[..., : self.channels], out[..., self.channels :]


class MasteringCloner(nn.Module):
    def __init__(self, config: ClonerConfig = ClonerConfig(),
                 filter_spec: FilterSpec = FilterSpec()):
        super().__init__()
        self.config = config
        c = config
        pad_d = c.down_kernel // 2
        pad_u = c.up_kernel // 2
        self.resampler = Resampler2(filter_spec)

        # stride-1 entry layer, excluded from the skip set
        self.first = nn.Conv1d(2, c.channels(0), c.down_kernel, padding=pad_d)

        self.down_convs = nn.ModuleList(
            nn.Conv1d(c.channels(l - 1), c.channels(l), c.down_kernel, padding=pad_d)
            for l in range(1, c.num_levels + 1)
        )
        bott = c.channels(c.num_levels)
        self.bottleneck = nn.Conv1d(bott, bott, c.down_kernel, padding=pad_d)
        self.up_convs = nn.ModuleList(
            nn.Conv1d(2 * c.channels(l), c.channels(l - 1), c.up_kernel, padding=pad_u)
            for l in range(c.num_levels, 0, -1)
        )
        self.film_producers = nn.ModuleList(
            FilmProducer(c.condition_dim, c.channels(l - 1))
            for l in range(c.num_levels, 0, -1)
        )
        self.head = nn.Conv1d(c.channels(0), 2, kernel_size=1)

    @property
    def skip_channel_counts(self):
        """Channel counts of the skip set (first layer intentionally absent)."""
        return [conv.out_channels for conv in self.down_convs]

    def _act(self, x):
        return _act_any_length(x, self.resampler, self.config.leaky_slope)

    def forward(self, x: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        """x: (B, 2, T) with T divisible by 2^num_levels; condition: (B, condition_dim)."""
        c = self.config
        if x.shape[-1] % (2 ** c.num_levels) != 0:
            raise ValueError(
                f"input length {x.shape[-1]} not divisible by 2^{c.num_levels}"
            )
        if condition.shape[-1] != c.condition_dim:
            raise ValueError(
                f"condition dim {condition.shape[-1]} != configured {c.condition_dim}"
            )
        h = self._act(self.first(x))
        skips = []
        for conv in self.down_convs:
            h = self._act(conv(h))
            skips.append(h)
            h = self.resampler.down(h)
        h = self._act(self.bottleneck(h))
        for conv, producer, skip in zip(self.up_convs, self.film_producers,
                                        reversed(skips)):
            h = self.resampler.up(h)
            h = torch.cat([h, skip], dim=1)
            h = self._act(conv(h))
            scale, shift = producer(condition)
            h = film(h, scale, shift)
        return torch.clamp(self.head(h), -1.0, 1.0)


def clone(a1: StereoWaveform, condition: np.ndarray, model: MasteringCloner) -> StereoWaveform:
    """Single-shot inference on a waveform whose length satisfies divisibility."""
    was_training = model.training
    model.eval()
    with torch.no_grad():
        x = torch.from_numpy(a1.samples).float().unsqueeze(0)
        cond = torch.from_numpy(np.asarray(condition)).float().unsqueeze(0)
        out = model(x, cond).squeeze(0).numpy().astype(np.float64)
    if was_training:
        model.train()
    return StereoWaveform(out, a1.sample_rate)


def remaster_waveform(
    a1: StereoWaveform,
    reference: StereoWaveform,
    encoder: EffectsEncoder,
    model: MasteringCloner,
    window: int = 131072,
) -> StereoWaveform:
    """Arbitrary-length inference: overlapped Hann-crossfaded windows.

    The reference is encoded once; windows of the training length are
    processed at 50% overlap and overlap-added. Output length equals the
    input length exactly.
    """
    from .encoder import encode  # local import to avoid cycle at module load

    if window % (2 ** model.config.num_levels) != 0:
        raise ValueError("window must satisfy the cloner's divisibility requirement")
    condition = encode(reference, encoder)

    n = a1.num_samples
    hop = window // 2
    pad = hop
    total = pad + n + pad
    total += (-total) % hop
    if total < window:
        total = window
    x = np.zeros((2, total))
    x[:, pad : pad + n] = a1.samples

    win = np.hanning(window + 1)[:window]
    acc = np.zeros((2, total))
    weight = np.zeros(total)
    model.eval()
    cond = torch.from_numpy(np.asarray(condition)).float().unsqueeze(0)
    with torch.no_grad():
        for start in range(0, total - window + 1, hop):
            chunk = torch.from_numpy(x[:, start : start + window]).float().unsqueeze(0)
            out = model(chunk, cond).squeeze(0).numpy().astype(np.float64)
            acc[:, start : start + window] += out * win
            weight[start : start + window] += win
    out = acc[:, pad : pad + n] / np.maximum(weight[pad : pad + n], 1e-8)
    return StereoWaveform(np.clip(out, -1.0, 1.0), a1.sample_rate)
