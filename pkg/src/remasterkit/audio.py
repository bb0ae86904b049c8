"""Core audio containers, WAV I/O, mid/side algebra and rate-2 resampling."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve, firwin

CANONICAL_RATE = 44100


class WavError(Exception):
    """Base class for WAV read/write failures."""


class UnsupportedWavError(WavError):
    """Codec, bit depth or channel layout this toolkit does not handle."""


class TruncatedWavError(WavError):
    """File ended before a declared chunk was complete."""


@dataclass(frozen=True)
class StereoWaveform:
    """Stereo PCM audio: samples is a (2, N) float64 array, nominal range [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] != 2:
            raise ValueError(f"expected (2, N) samples, got shape {samples.shape}")
        if samples.shape[1] < 1:
            raise ValueError("waveform must contain at least one sample")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    @property
    def left(self) -> np.ndarray:
        return self.samples[0]

    @property
    def right(self) -> np.ndarray:
        return self.samples[1]


@dataclass(frozen=True)
class MidSideWaveform:
    """Mid/side representation: mid = (L+R)/2, side = (L-R)/2."""

    mid: np.ndarray
    side: np.ndarray
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        mid = np.asarray(self.mid, dtype=np.float64)
        side = np.asarray(self.side, dtype=np.float64)
        if mid.shape != side.shape or mid.ndim != 1:
            raise ValueError("mid and side must be 1-D arrays of equal length")
        object.__setattr__(self, "mid", mid)
        object.__setattr__(self, "side", side)


@dataclass(frozen=True)
class FilterSpec:
    """Kaiser-windowed low-pass FIR design used by the rate-2 resamplers."""

    cutoff: float = 0.5  # fraction of Nyquist
    taps: int = 127
    beta: float = 8.0
    kind: str = "low-pass"
    window: str = "kaiser"

    def __post_init__(self):
        if not 0.0 < self.cutoff < 1.0:
            raise ValueError("cutoff must lie in (0, 1)")
        if self.taps < 15 or self.taps % 2 == 0:
            raise ValueError("taps must be odd and >= 15")

    def coefficients(self) -> np.ndarray:
        return firwin(self.taps, self.cutoff, window=(self.window, self.beta))


def to_mid_side(wf: StereoWaveform) -> MidSideWaveform:
    """Decompose stereo into mid/side with the (L±R)/2 normalization."""
    return MidSideWaveform(
        mid=(wf.left + wf.right) / 2.0,
        side=(wf.left - wf.right) / 2.0,
        sample_rate=wf.sample_rate,
    )


def from_mid_side(ms: MidSideWaveform) -> StereoWaveform:
    """Exact inverse of to_mid_side: L = mid + side, R = mid - side."""
    return StereoWaveform(
        samples=np.stack([ms.mid + ms.side, ms.mid - ms.side]),
        sample_rate=ms.sample_rate,
    )


def rms(x) -> float:
    """Root mean square. A StereoWaveform pools all 2N samples."""
    if isinstance(x, StereoWaveform):
        x = x.samples
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("rms of empty input is undefined")
    return float(np.sqrt(np.mean(np.square(x))))


def segment(wf: StereoWaveform, start: int, length: int) -> StereoWaveform:
    """Exact slice of `length` samples beginning at `start`."""
    if length < 1:
        raise ValueError("segment length must be >= 1")
    if start < 0 or start + length > wf.num_samples:
        raise ValueError(
            f"slice [{start}, {start + length}) out of range for {wf.num_samples} samples"
        )
    return StereoWaveform(wf.samples[:, start : start + length].copy(), wf.sample_rate)


def _fir_lowpass(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Zero-padded FIR filtering trimmed to the input length (group delay taps//2)."""
    delay = len(h) // 2
    y = fftconvolve(x, h, mode="full")
    return y[delay : delay + len(x)]


def resample2(x: np.ndarray, direction: str, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Anti-aliased resampling by a factor of 2.

    "up" zero-stuffs then low-passes (with gain-2 compensation); "down"
    low-passes then decimates. Both use the Kaiser design in `spec`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("resample2 expects a single-channel array")
    h = spec.coefficients()
    if direction == "up":
        up = np.zeros(2 * len(x), dtype=np.float64)
        up[::2] = x
        return 2.0 * _fir_lowpass(up, h)
    if direction == "down":
        if len(x) % 2 != 0:
            raise ValueError("downsampling requires an even-length input")
        return _fir_lowpass(x, h)[::2]
    raise ValueError(f"unknown direction {direction!r}")


# ---------------------------------------------------------------------------
# WAV persistence (RIFF PCM 16/24-bit and 32-bit float)
# ---------------------------------------------------------------------------

_PCM = 1
_FLOAT = 3
_EXTENSIBLE = 0xFFFE


def load_wav(path) -> StereoWaveform:
    """Read a RIFF/WAVE file (PCM 16/24-bit or float32, mono or stereo).

    Mono files are duplicated to both channels; integer PCM is scaled by
    2^(bits-1) so full-scale positive is (2^(bits-1)-1)/2^(bits-1).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise UnsupportedWavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise TruncatedWavError(
                f"{path}: chunk {chunk_id!r} declares {chunk_size} bytes, "
                f"only {len(body)} present"
            )
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_size + (chunk_size % 2)

    if fmt is None or data is None:
        raise TruncatedWavError(f"{path}: missing fmt or data chunk")
    if len(fmt) < 16:
        raise TruncatedWavError(f"{path}: fmt chunk too short")

    audio_format, channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format == _EXTENSIBLE and len(fmt) >= 26:
        (audio_format,) = struct.unpack_from("<H", fmt, 24)
    if channels not in (1, 2):
        raise UnsupportedWavError(f"{path}: {channels} channels unsupported")

    if audio_format == _PCM and bits == 16:
        frames = np.frombuffer(data, dtype="<i2").astype(np.float64) / 2**15
    elif audio_format == _PCM and bits == 24:
        b = np.frombuffer(data, dtype=np.uint8)
        if len(b) % 3 != 0:
            raise TruncatedWavError(f"{path}: 24-bit data not a multiple of 3 bytes")
        b = b.reshape(-1, 3)
        codes = (
            b[:, 0].astype(np.int32)
            | (b[:, 1].astype(np.int32) << 8)
            | (b[:, 2].astype(np.int32) << 16)
        )
        codes = np.where(codes >= 2**23, codes - 2**24, codes)
        frames = codes.astype(np.float64) / 2**23
    elif audio_format == _FLOAT and bits == 32:
        frames = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedWavError(f"{path}: unsupported codec/bit depth (format {audio_format}, {bits}-bit)")

    if len(frames) % channels != 0:
        raise TruncatedWavError(f"{path}: data chunk not a whole number of frames")
    frames = frames.reshape(-1, channels)
    if channels == 1:
        samples = np.repeat(frames.T, 2, axis=0)
    else:
        samples = frames.T.copy()
    return StereoWaveform(samples=samples, sample_rate=sample_rate)


def save_wav(wf: StereoWaveform, path, bit_depth: str = "32f") -> None:
    """Write a stereo WAV at 16, 24 or float-32 depth; out-of-range values clamp."""
    path = Path(path)
    frames = wf.samples.T  # (N, 2) interleaved

    if bit_depth in ("16", 16):
        bits, fmt_code = 16, _PCM
        codes = np.clip(np.round(frames * 2**15), -(2**15), 2**15 - 1).astype("<i2")
        payload = codes.tobytes()
    elif bit_depth in ("24", 24):
        bits, fmt_code = 24, _PCM
        codes = np.clip(np.round(frames * 2**23), -(2**23), 2**23 - 1).astype(np.int32)
        flat = codes.reshape(-1)
        payload = bytes(
            np.stack([flat & 0xFF, (flat >> 8) & 0xFF, (flat >> 16) & 0xFF], axis=1)
            .astype(np.uint8)
            .tobytes()
        )
    elif bit_depth == "32f":
        bits, fmt_code = 32, _FLOAT
        payload = frames.astype("<f4").tobytes()
    else:
        raise ValueError(f"bit_depth must be one of 16, 24, '32f'; got {bit_depth!r}")

    channels = 2
    byte_rate = wf.sample_rate * channels * bits // 8
    block_align = channels * bits // 8
    fmt_chunk = struct.pack(
        "<HHIIHH", fmt_code, channels, wf.sample_rate, byte_rate, block_align, bits
    )
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) % 2:
        body += b"\x00"
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
