"""Mastering chain: gain, parametric EQ, multiband stereo imager, maximizer.

All stages are pure and deterministic; the chain order is fixed as
tone -> space -> volume. Parameter records serialize to JSON bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import minimum_filter1d
from scipy.signal import butter, lfilter, sosfilt

from .audio import MidSideWaveform, StereoWaveform, from_mid_side, to_mid_side

DEFAULT_CROSSOVERS = (300.0, 1500.0, 5100.0)


@dataclass(frozen=True)
class EqBand:
    shape: str  # low-shelf | peak | high-shelf
    freq: float
    gain_db: float
    q: float

    def __post_init__(self):
        if self.shape not in ("low-shelf", "peak", "high-shelf"):
            raise ValueError(f"unknown band shape {self.shape!r}")
        if not 20.0 <= self.freq <= 20000.0:
            raise ValueError("band frequency must lie in [20, 20000] Hz")
        if abs(self.gain_db) > 15.0:
            raise ValueError("band gain must satisfy |gain_db| <= 15")
        if not 0.1 <= self.q <= 5.0:
            raise ValueError("band q must lie in [0.1, 5]")


@dataclass(frozen=True)
class ImagerParams:
    crossover_freqs: tuple
    widths: tuple

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.crossover_freqs)
        widths = tuple(float(w) for w in self.widths)
        if len(freqs) != 3 or any(f2 <= f1 for f1, f2 in zip(freqs, freqs[1:])):
            raise ValueError("need 3 strictly ascending crossover frequencies")
        if not all(20.0 < f < 20000.0 for f in freqs):
            raise ValueError("crossovers must lie in (20, 20000) Hz")
        if len(widths) != 4 or not all(0.0 <= w <= 2.0 for w in widths):
            raise ValueError("need 4 widths in [0, 2]")
        object.__setattr__(self, "crossover_freqs", freqs)
        object.__setattr__(self, "widths", widths)


@dataclass(frozen=True)
class MaximizerParams:
    pre_gain_db: float
    ceiling_db: float
    release_ms: float = 60.0
    lookahead_ms: float = 5.0

    def __post_init__(self):
        if self.ceiling_db > 0.0:
            raise ValueError("ceiling_db must be <= 0 dBFS")
        if self.release_ms <= 0.0:
            raise ValueError("release_ms must be positive")
        if self.lookahead_ms < 0.0:
            raise ValueError("lookahead_ms must be >= 0")


@dataclass(frozen=True)
class FxParams:
    gain_db: float
    eq_bands: tuple
    imager: ImagerParams
    maximizer: MaximizerParams
    seed: int

    def to_dict(self) -> dict:
        return {
            "gain_db": self.gain_db,
            "eq_bands": [asdict(b) for b in self.eq_bands],
            "imager": {
                "crossover_freqs": list(self.imager.crossover_freqs),
                "widths": list(self.imager.widths),
            },
            "maximizer": asdict(self.maximizer),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FxParams":
        return cls(
            gain_db=d["gain_db"],
            eq_bands=tuple(EqBand(**b) for b in d["eq_bands"]),
            imager=ImagerParams(
                crossover_freqs=tuple(d["imager"]["crossover_freqs"]),
                widths=tuple(d["imager"]["widths"]),
            ),
            maximizer=MaximizerParams(**d["maximizer"]),
            seed=d["seed"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FxParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ParamRanges:
    """Sampling ranges for random mastering manipulations."""

    gain_db: tuple = (-6.0, 6.0)
    eq_gain_db: tuple = (-10.0, 10.0)
    low_shelf_freq: tuple = (30.0, 200.0)
    peak_freq: tuple = (200.0, 10000.0)  # log-uniform
    peak_q: tuple = (0.3, 3.0)  # log-uniform
    num_peaks: int = 4
    high_shelf_freq: tuple = (4000.0, 16000.0)
    crossover_freqs: tuple = DEFAULT_CROSSOVERS
    width: tuple = (0.0, 2.0)
    pre_gain_db: tuple = (0.0, 12.0)
    ceiling_db: tuple = (-1.0, -0.1)
    release_ms: float = 60.0
    lookahead_ms: float = 5.0

    @classmethod
    def identity(cls) -> "ParamRanges":
        """Degenerate ranges producing a transparent chain (for tests)."""
        return cls(
            gain_db=(0.0, 0.0),
            eq_gain_db=(0.0, 0.0),
            width=(1.0, 1.0),
            pre_gain_db=(0.0, 0.0),
            ceiling_db=(-0.1, -0.1),
        )


def _uniform(rng: np.random.Generator, lo_hi) -> float:
    lo, hi = lo_hi
    if hi < lo:
        raise ValueError(f"invalid range ({lo}, {hi})")
    return float(lo) if hi == lo else float(rng.uniform(lo, hi))


def _log_uniform(rng: np.random.Generator, lo_hi) -> float:
    lo, hi = lo_hi
    if lo <= 0 or hi < lo:
        raise ValueError(f"invalid log-uniform range ({lo}, {hi})")
    return float(lo) if hi == lo else float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def sample_fx_params(rng: np.random.Generator, ranges: ParamRanges = ParamRanges()) -> FxParams:
    """Draw one full mastering manipulation.

    The record carries a seed drawn from `rng`; params_from_seed(seed, ranges)
    reproduces the identical FxParams, so a manipulation is replayable from
    its seed alone.
    """
    seed = int(rng.integers(0, 2**63 - 1))
    return params_from_seed(seed, ranges)


def params_from_seed(seed: int, ranges: ParamRanges = ParamRanges()) -> FxParams:
    rng = np.random.default_rng(seed)
    bands = [
        EqBand("low-shelf", _log_uniform(rng, ranges.low_shelf_freq),
               _uniform(rng, ranges.eq_gain_db), 0.707)
    ]
    for _ in range(ranges.num_peaks):
        bands.append(
            EqBand("peak", _log_uniform(rng, ranges.peak_freq),
                   _uniform(rng, ranges.eq_gain_db), _log_uniform(rng, ranges.peak_q))
        )
    bands.append(
        EqBand("high-shelf", _log_uniform(rng, ranges.high_shelf_freq),
               _uniform(rng, ranges.eq_gain_db), 0.707)
    )
    return FxParams(
        gain_db=_uniform(rng, ranges.gain_db),
        eq_bands=tuple(bands),
        imager=ImagerParams(
            crossover_freqs=ranges.crossover_freqs,
            widths=tuple(_uniform(rng, ranges.width) for _ in range(4)),
        ),
        maximizer=MaximizerParams(
            pre_gain_db=_uniform(rng, ranges.pre_gain_db),
            ceiling_db=_uniform(rng, ranges.ceiling_db),
            release_ms=ranges.release_ms,
            lookahead_ms=ranges.lookahead_ms,
        ),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Parametric EQ (RBJ cookbook biquads)
# ---------------------------------------------------------------------------

def biquad_coefficients(band: EqBand, sample_rate: int):
    """RBJ audio-cookbook coefficients, normalized so a0 = 1."""
    if band.freq >= sample_rate / 2:
        raise ValueError(f"band frequency {band.freq} Hz at or above Nyquist")
    a = 10.0 ** (band.gain_db / 40.0)
    w0 = 2.0 * math.pi * band.freq / sample_rate
    cw, sw = math.cos(w0), math.sin(w0)

    if band.shape == "peak":
        alpha = sw / (2.0 * band.q)
        b = [1 + alpha * a, -2 * cw, 1 - alpha * a]
        den = [1 + alpha / a, -2 * cw, 1 - alpha / a]
    else:
        # shelf slope fixed at 1; q interpreted as shelf steepness control
        alpha = sw / 2.0 * math.sqrt((a + 1 / a) * (1 / (band.q * band.q) - 1) + 2) \
            if band.q < 1.0 else sw / math.sqrt(2.0)
        sq = 2.0 * math.sqrt(a) * alpha
        if band.shape == "low-shelf":
            b = [a * ((a + 1) - (a - 1) * cw + sq),
                 2 * a * ((a - 1) - (a + 1) * cw),
                 a * ((a + 1) - (a - 1) * cw - sq)]
            den = [(a + 1) + (a - 1) * cw + sq,
                   -2 * ((a - 1) + (a + 1) * cw),
                   (a + 1) + (a - 1) * cw - sq]
        else:  # high-shelf
            b = [a * ((a + 1) + (a - 1) * cw + sq),
                 -2 * a * ((a - 1) + (a + 1) * cw),
                 a * ((a + 1) + (a - 1) * cw - sq)]
            den = [(a + 1) - (a - 1) * cw + sq,
                   2 * ((a - 1) - (a + 1) * cw),
                   (a + 1) - (a - 1) * cw - sq]
    a0 = den[0]
    return np.array(b) / a0, np.array([1.0, den[1] / a0, den[2] / a0])


def biquad_response_db(band: EqBand, sample_rate: int, freqs_hz: np.ndarray) -> np.ndarray:
    """Analytic magnitude response of one band in dB at the given frequencies."""
    b, a = biquad_coefficients(band, sample_rate)
    w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / sample_rate
    z = np.exp(-1j * w)
    h = (b[0] + b[1] * z + b[2] * z**2) / (a[0] + a[1] * z + a[2] * z**2)
    return 20.0 * np.log10(np.abs(h))


def apply_eq(wf: StereoWaveform, bands: Sequence[EqBand]) -> StereoWaveform:
    """Cascade of biquads, identical filtering on both channels."""
    out = wf.samples
    for band in bands:
        b, a = biquad_coefficients(band, wf.sample_rate)
        out = lfilter(b, a, out, axis=1)
    return StereoWaveform(out, wf.sample_rate)


def apply_gain(wf: StereoWaveform, gain_db: float) -> StereoWaveform:
    return StereoWaveform(wf.samples * 10.0 ** (gain_db / 20.0), wf.sample_rate)


# ---------------------------------------------------------------------------
# Linkwitz-Riley crossover and multiband stereo imager
# ---------------------------------------------------------------------------

def _lr4_sos(freq: float, sample_rate: int, btype: str) -> np.ndarray:
    # LR4 = squared 2nd-order Butterworth, realized as two cascaded sections
    sos = butter(2, freq, btype=btype, fs=sample_rate, output="sos")
    return np.concatenate([sos, sos])


def crossover_split(wf: StereoWaveform, freqs: Sequence[float]):
    """Split into 4 bands with LR4 filters; bands sum to an all-pass response.

    Lower bands are phase-compensated with the LR4 all-pass of every higher
    crossover so the band sum stays magnitude-flat.
    """
    freqs = [float(f) for f in freqs]
    if len(freqs) != 3 or any(f2 <= f1 for f1, f2 in zip(freqs, freqs[1:])):
        raise ValueError("crossover frequencies must be 3 ascending values")
    if freqs[-1] >= wf.sample_rate / 2:
        raise ValueError("crossover frequency at or above Nyquist")

    lows = [_lr4_sos(f, wf.sample_rate, "lowpass") for f in freqs]
    highs = [_lr4_sos(f, wf.sample_rate, "highpass") for f in freqs]

    def lp(x, i):
        return sosfilt(lows[i], x, axis=-1)

    def hp(x, i):
        return sosfilt(highs[i], x, axis=-1)

    def ap(x, i):  # LR4 all-pass at crossover i
        return lp(x, i) + hp(x, i)

    x = wf.samples
    band1 = ap(ap(lp(x, 0), 1), 2)
    rest = hp(x, 0)
    band2 = ap(lp(rest, 1), 2)
    rest = hp(rest, 1)
    band3 = lp(rest, 2)
    band4 = hp(rest, 2)
    sr = wf.sample_rate
    return tuple(StereoWaveform(b, sr) for b in (band1, band2, band3, band4))


def apply_stereo_imager(wf: StereoWaveform, p: ImagerParams) -> StereoWaveform:
    """Scale the side channel per band; width 1 leaves the band untouched."""
    bands = crossover_split(wf, p.crossover_freqs)
    total = np.zeros_like(wf.samples)
    for band, width in zip(bands, p.widths):
        ms = to_mid_side(band)
        scaled = MidSideWaveform(mid=ms.mid, side=ms.side * width, sample_rate=ms.sample_rate)
        total += from_mid_side(scaled).samples
    return StereoWaveform(total, wf.sample_rate)


# ---------------------------------------------------------------------------
# Maximizer (pre-gain + lookahead brickwall limiter)
# ---------------------------------------------------------------------------

def apply_maximizer(wf: StereoWaveform, p: MaximizerParams) -> StereoWaveform:
    """Stereo-linked lookahead limiting after pre-gain.

    The gain envelope is a lookahead running-minimum of the per-sample
    required gain, smoothed with a one-pole release; the final envelope is
    clamped by the instantaneous requirement so the ceiling is a hard bound.
    """
    x = wf.samples * 10.0 ** (p.pre_gain_db / 20.0)
    ceiling = 10.0 ** (p.ceiling_db / 20.0)
    peak = np.max(np.abs(x), axis=0)  # stereo-linked
    required = np.minimum(1.0, ceiling / np.maximum(peak, 1e-12))

    lookahead = max(1, int(round(p.lookahead_ms * wf.sample_rate / 1000.0)))
    # forward-looking running minimum: ahead[n] = min(required[n : n + lookahead])
    padded = np.concatenate([required, np.full(lookahead, required[-1])])
    centered = minimum_filter1d(padded, size=lookahead, mode="nearest")
    ahead = centered[lookahead // 2 : lookahead // 2 + len(required)]

    k = 1.0 - math.exp(-1.0 / (p.release_ms * wf.sample_rate / 1000.0))
    smoothed = lfilter([k], [1.0, -(1.0 - k)], ahead, zi=np.array([1.0 - k]))[0]
    gain = np.minimum(smoothed, required)
    return StereoWaveform(x * gain, wf.sample_rate)


def apply_chain(wf: StereoWaveform, p: FxParams) -> StereoWaveform:
    """Fixed-order mastering chain: gain -> EQ -> stereo imager -> maximizer."""
    out = apply_gain(wf, p.gain_db)
    out = apply_eq(out, p.eq_bands)
    out = apply_stereo_imager(out, p.imager)
    out = apply_maximizer(out, p.maximizer)
    return out
