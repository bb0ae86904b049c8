"""Training objectives: weighted RMS loss, multi-scale spectral loss,
their combination for the cloner, and hinge adversarial losses.

All functions operate on torch tensors and are differentiable; waveform
batches are shaped (B, 2, T).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class RmsLossSpec:
    rho: float = 100.0
    exponent: float = 1.5  # fixed by the objective definition

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class MssSpec:
    fft_sizes: tuple = (4096, 2048, 1024, 512)
    overlap: float = 0.75
    log_eps: float = 1e-7
    log_weight: float = 1.0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.fft_sizes)
        if any(s2 >= s1 for s1, s2 in zip(sizes, sizes[1:])):
            raise ValueError("fft_sizes must be descending")
        if not 0.0 < self.overlap < 1.0:
            raise ValueError("overlap must lie in (0, 1)")
        object.__setattr__(self, "fft_sizes", sizes)


def batch_rms(x: torch.Tensor) -> torch.Tensor:
    """Per-example RMS pooled over channels and time. x: (B, ...) -> (B,)."""
    return torch.sqrt(torch.mean(x.reshape(x.shape[0], -1) ** 2, dim=1))


def rms_loss(a2: torch.Tensor, a2p: torch.Tensor,
             spec: RmsLossSpec = RmsLossSpec()) -> torch.Tensor:
    """Volume penalty: gamma^1.5 * (RMS(a2) - RMS(a2'))^2 with
    gamma = rho * min(1/rho, |RMS(a2) - RMS(a2')|), meaned over the batch."""
    if a2.shape != a2p.shape:
        raise ValueError(f"shape mismatch {tuple(a2.shape)} vs {tuple(a2p.shape)}")
    diff = batch_rms(a2) - batch_rms(a2p)
    gamma = spec.rho * torch.clamp(diff.abs(), max=1.0 / spec.rho)
    return torch.mean(gamma ** spec.exponent * diff ** 2)


def _magnitude_spectrogram(x: torch.Tensor, n_fft: int, hop: int) -> torch.Tensor:
    window = torch.hann_window(n_fft, device=x.device, dtype=x.dtype)
    spec = torch.stft(x, n_fft=n_fft, hop_length=hop, win_length=n_fft,
                      window=window, center=False, return_complex=True)
    return spec.abs()


def mss_loss(x: torch.Tensor, y: torch.Tensor, spec: MssSpec = MssSpec()) -> torch.Tensor:
    """Multi-scale spectral loss over single-channel signals shaped (B, T) or (T,).

    For each FFT size: mean |S_x - S_y| + log_weight * mean |log(S_x + eps)
    - log(S_y + eps)|, summed over sizes.
    """
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.dim() == 1:
        x, y = x.unsqueeze(0), y.unsqueeze(0)
    if x.shape[-1] < max(spec.fft_sizes):
        raise ValueError(
            f"input of {x.shape[-1]} samples shorter than the largest FFT "
            f"size {max(spec.fft_sizes)}"
        )
    total = x.new_zeros(())
    for n_fft in spec.fft_sizes:
        hop = int(n_fft * (1.0 - spec.overlap))
        sx = _magnitude_spectrogram(x, n_fft, hop)
        sy = _magnitude_spectrogram(y, n_fft, hop)
        linear = torch.mean(torch.abs(sx - sy))
        log = torch.mean(torch.abs(torch.log(sx + spec.log_eps)
                                   - torch.log(sy + spec.log_eps)))
        total = total + linear + spec.log_weight * log
    return total


def cloner_loss(a2: torch.Tensor, a2p: torch.Tensor,
                rms_spec: RmsLossSpec = RmsLossSpec(),
                mss_spec: MssSpec = MssSpec()) -> torch.Tensor:
    """Full generator reconstruction objective.

    RMS term plus multi-scale spectral terms on left, right, mid and side
    channels. Inputs are (B, 2, T) stereo batches.
    """
    if a2.shape != a2p.shape:
        raise ValueError(f"shape mismatch {tuple(a2.shape)} vs {tuple(a2p.shape)}")
    left, right = a2[:, 0], a2[:, 1]
    left_p, right_p = a2p[:, 0], a2p[:, 1]
    mid, side = (left + right) / 2.0, (left - right) / 2.0
    mid_p, side_p = (left_p + right_p) / 2.0, (left_p - right_p) / 2.0
    return (
        rms_loss(a2, a2p, rms_spec)
        + mss_loss(left, left_p, mss_spec)
        + mss_loss(right, right_p, mss_spec)
        + mss_loss(mid, mid_p, mss_spec)
        + mss_loss(side, side_p, mss_spec)
    )


def hinge_d_loss(real_score: torch.Tensor, fake_score: torch.Tensor) -> torch.Tensor:
    """Discriminator hinge loss: E[max(0, 1 - real)] + E[max(0, 1 + fake)]."""
    real_score = torch.as_tensor(real_score, dtype=torch.float32) \
        if not torch.is_tensor(real_score) else real_score
    fake_score = torch.as_tensor(fake_score, dtype=torch.float32) \
        if not torch.is_tensor(fake_score) else fake_score
    return torch.mean(F.relu(1.0 - real_score)) + torch.mean(F.relu(1.0 + fake_score))


def hinge_g_loss(fake_score: torch.Tensor) -> torch.Tensor:
    """Generator hinge loss: -E[fake]."""
    fake_score = torch.as_tensor(fake_score, dtype=torch.float32) \
        if not torch.is_tensor(fake_score) else fake_score
    return -torch.mean(fake_score)
