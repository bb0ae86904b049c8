"""Objective evaluation: RMS deltas, frequency-weighted segmental SNR and
short-time objective intelligibility, plus report aggregation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .audio import StereoWaveform, rms, to_mid_side

FW_SNR_FLOOR = -10.0
FW_SNR_CEILING = 35.0
FW_SNR_WEIGHT_EXPONENT = 0.2

# classic 25 critical-band centers and bandwidths (Hz)
_CRIT_CENTERS = np.array([
    50.0, 120.0, 190.0, 260.0, 330.0, 400.0, 470.0, 540.0, 617.372,
    703.378, 798.717, 904.128, 1020.38, 1148.30, 1288.72, 1442.54,
    1610.70, 1794.16, 1993.93, 2211.08, 2446.71, 2701.97, 2978.04,
    3276.17, 3597.63,
])
_CRIT_BANDWIDTHS = np.array([
    70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 77.3724, 86.0056,
    95.3398, 105.411, 116.256, 127.914, 140.423, 153.823, 168.154,
    183.457, 199.776, 217.153, 235.631, 255.255, 276.072, 298.126,
    321.465, 346.136,
])


def _check_pair(target: StereoWaveform, output: StereoWaveform):
    if target.num_samples != output.num_samples:
        raise ValueError(
            f"length mismatch: {target.num_samples} vs {output.num_samples}"
        )


def delta_rms(target: StereoWaveform, output: StereoWaveform) -> float:
    """|RMS(target) - RMS(output)| with stereo-pooled RMS."""
    _check_pair(target, output)
    return abs(rms(target) - rms(output))


def delta_rms_side(target: StereoWaveform, output: StereoWaveform) -> float:
    """|RMS(side(target)) - RMS(side(output))|."""
    _check_pair(target, output)
    return abs(rms(to_mid_side(target).side) - rms(to_mid_side(output).side))


def _frame(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    count = 1 + (len(x) - frame_len) // hop
    idx = np.arange(frame_len)[None, :] + hop * np.arange(count)[:, None]
    return x[idx]


def _critical_band_filterbank(n_bins: int, sample_rate: int) -> np.ndarray:
    """Gaussian-shaped critical-band filters over FFT bins, (25, n_bins)."""
    freqs = np.arange(n_bins) * sample_rate / (2.0 * (n_bins - 1))
    filters = np.exp(
        -11.0 * ((freqs[None, :] - _CRIT_CENTERS[:, None]) / _CRIT_BANDWIDTHS[:, None]) ** 2
    )
    min_factor = np.exp(-30.0 / (2.0 * 2.303))
    return np.where(filters > min_factor, filters, 0.0)


def _fw_snr_mono(x: np.ndarray, y: np.ndarray, sample_rate: int) -> float:
    frame_len = int(round(0.025 * sample_rate))
    hop = frame_len // 2
    if len(x) < frame_len:
        raise ValueError("signal shorter than one 25 ms frame")
    window = np.hanning(frame_len)
    frames_x = _frame(x, frame_len, hop) * window
    frames_y = _frame(y, frame_len, hop) * window

    n_fft = int(2 ** np.ceil(np.log2(frame_len)))
    mag_x = np.abs(np.fft.rfft(frames_x, n=n_fft, axis=1))
    mag_y = np.abs(np.fft.rfft(frames_y, n=n_fft, axis=1))
    filterbank = _critical_band_filterbank(mag_x.shape[1], sample_rate)

    band_x = mag_x @ filterbank.T  # (frames, 25)
    band_y = mag_y @ filterbank.T
    active = band_x.sum(axis=1) > 1e-10
    if not np.any(active):
        raise ValueError("target is silent")
    band_x, band_y = band_x[active], band_y[active]

    err = (band_x - band_y) ** 2
    with np.errstate(divide="ignore"):
        snr = 10.0 * np.log10(band_x**2 / np.maximum(err, 1e-300))
    snr = np.clip(snr, FW_SNR_FLOOR, FW_SNR_CEILING)
    weights = band_x ** FW_SNR_WEIGHT_EXPONENT
    per_frame = (weights * snr).sum(axis=1) / np.maximum(weights.sum(axis=1), 1e-300)
    return float(per_frame.mean())


def fw_snr(target: StereoWaveform, output: StereoWaveform) -> float:
    """Frequency-weighted segmental SNR in dB, clamped to [-10, 35], channel-averaged."""
    _check_pair(target, output)
    return float(np.mean([
        _fw_snr_mono(target.samples[ch], output.samples[ch], target.sample_rate)
        for ch in range(2)
    ]))


# ---------------------------------------------------------------------------
# STOI
# ---------------------------------------------------------------------------

_STOI_RATE = 10000
_STOI_FRAME = 256
_STOI_HOP = 128
_STOI_FFT = 512
_STOI_NUM_BANDS = 15
_STOI_MIN_FREQ = 150.0
_STOI_SEGMENT = 30  # analysis frames (384 ms)
_STOI_BETA = -15.0  # lower SDR clipping bound, dB
_STOI_DYN_RANGE = 40.0


def _third_octave_matrix() -> np.ndarray:
    """Boolean-ish band matrix mapping FFT bins to 15 one-third-octave bands."""
    freqs = np.arange(_STOI_FFT // 2 + 1) * _STOI_RATE / _STOI_FFT
    centers = _STOI_MIN_FREQ * 2.0 ** (np.arange(_STOI_NUM_BANDS) / 3.0)
    lows = centers * 2.0 ** (-1.0 / 6.0)
    highs = centers * 2.0 ** (1.0 / 6.0)
    matrix = np.zeros((_STOI_NUM_BANDS, len(freqs)))
    for j in range(_STOI_NUM_BANDS):
        matrix[j] = (freqs >= lows[j]) & (freqs < highs[j])
    return matrix


def _stoi_mono(x: np.ndarray, y: np.ndarray, sample_rate: int) -> float:
    if sample_rate != _STOI_RATE:
        x = resample_poly(x, _STOI_RATE, sample_rate)
        y = resample_poly(y, _STOI_RATE, sample_rate)
    if len(x) < _STOI_FRAME:
        raise ValueError("signal too short for STOI")

    window = np.hanning(_STOI_FRAME + 2)[1:-1]
    frames_x = _frame(x, _STOI_FRAME, _STOI_HOP) * window
    frames_y = _frame(y, _STOI_FRAME, _STOI_HOP) * window

    # drop frames more than 40 dB below the loudest target frame
    energy = 20.0 * np.log10(np.linalg.norm(frames_x, axis=1) + 1e-300)
    if not np.any(np.isfinite(energy)):
        raise ValueError("target is silent")
    keep = energy > energy.max() - _STOI_DYN_RANGE
    frames_x, frames_y = frames_x[keep], frames_y[keep]
    if frames_x.shape[0] < _STOI_SEGMENT:
        raise ValueError("fewer than 30 active frames; signal too short for STOI")

    band = _third_octave_matrix()
    spec_x = np.abs(np.fft.rfft(frames_x, n=_STOI_FFT, axis=1))
    spec_y = np.abs(np.fft.rfft(frames_y, n=_STOI_FFT, axis=1))
    env_x = np.sqrt(spec_x**2 @ band.T)  # (frames, bands)
    env_y = np.sqrt(spec_y**2 @ band.T)

    clip = 10.0 ** (-_STOI_BETA / 20.0)
    scores = []
    for m in range(_STOI_SEGMENT, env_x.shape[0] + 1):
        seg_x = env_x[m - _STOI_SEGMENT : m]  # (30, bands)
        seg_y = env_y[m - _STOI_SEGMENT : m]
        alpha = np.linalg.norm(seg_x, axis=0) / (np.linalg.norm(seg_y, axis=0) + 1e-300)
        seg_y = np.minimum(seg_y * alpha[None, :], seg_x * (1.0 + clip))
        xn = seg_x - seg_x.mean(axis=0, keepdims=True)
        yn = seg_y - seg_y.mean(axis=0, keepdims=True)
        denom = np.linalg.norm(xn, axis=0) * np.linalg.norm(yn, axis=0) + 1e-300
        scores.append((xn * yn).sum(axis=0) / denom)
    return float(np.mean(scores))


def stoi(target: StereoWaveform, output: StereoWaveform,
         downmix: str = "per_channel") -> float:
    """Short-time objective intelligibility in [0, 1].

    `downmix` selects per-channel evaluation (averaged) or a mono fold-down
    before the STOI pipeline.
    """
    _check_pair(target, output)
    if downmix == "mono":
        x = target.samples.mean(axis=0)
        y = output.samples.mean(axis=0)
        return _stoi_mono(x, y, target.sample_rate)
    if downmix != "per_channel":
        raise ValueError("downmix must be 'per_channel' or 'mono'")
    return float(np.mean([
        _stoi_mono(target.samples[ch], output.samples[ch], target.sample_rate)
        for ch in range(2)
    ]))


# ---------------------------------------------------------------------------
# Pair evaluation / reporting
# ---------------------------------------------------------------------------

def metric_record(pair_id: str, target: StereoWaveform, output: StereoWaveform) -> dict:
    return {
        "pair_id": pair_id,
        "delta_rms": delta_rms(target, output),
        "delta_rms_side": delta_rms_side(target, output),
        "fw_snr_db": fw_snr(target, output),
        "stoi": stoi(target, output),
    }


def aggregate_report(records: list, metadata: dict = None) -> dict:
    keys = ("delta_rms", "delta_rms_side", "fw_snr_db", "stoi")
    if records:
        aggregates = {k: float(np.mean([r[k] for r in records])) for k in keys}
    else:
        aggregates = {k: None for k in keys}
    return {
        "records": records,
        "aggregates": aggregates,
        "metadata": metadata or {},
    }


def evaluate_pairs(index_path, encoder, cloner, out_path=None,
                   window: int = 131072, metadata: dict = None) -> dict:
    """Remaster every indexed (input, reference) pair and score against the target.

    The index is the fabrication JSON-lines schema; paths are resolved
    relative to the index file. Writes the report JSON when out_path is given.
    """
    from .audio import load_wav
    from .cloner import remaster_waveform
    from .dataset import read_index

    index_path = Path(index_path)
    base = index_path.parent
    records = []
    for i, rec in enumerate(read_index(index_path)):
        a1 = load_wav(base / rec["a1_path"])
        a2 = load_wav(base / rec["a2_path"])
        b2 = load_wav(base / rec["b2_path"])
        output = remaster_waveform(a1, b2, encoder, cloner, window=window)
        records.append(metric_record(f"{i:06d}", a2, output))
    report = aggregate_report(records, metadata)
    if out_path is not None:
        Path(out_path).write_text(json.dumps(report, indent=2))
    return report
