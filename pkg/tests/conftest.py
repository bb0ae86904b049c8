import numpy as np
import pytest

from remasterkit.audio import StereoWaveform, save_wav


def make_song(seed: int, seconds: float, sample_rate: int = 44100) -> StereoWaveform:
    """Synthetic song with a seed-specific timbre and stereo image."""
    rng = np.random.default_rng(seed)
    n = int(seconds * sample_rate)
    t = np.arange(n) / sample_rate
    left = np.zeros(n)
    right = np.zeros(n)
    for _ in range(4):
        freq = rng.uniform(80, 4000)
        amp = rng.uniform(0.05, 0.15)
        pan = rng.uniform(0.2, 0.8)
        phase = rng.uniform(0, 2 * np.pi)
        tone = amp * np.sin(2 * np.pi * freq * t + phase)
        left += tone * pan
        right += tone * (1 - pan)
    # slow tremolo so RMS varies across the song
    env = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(0.1, 0.5) * t)
    noise = rng.normal(0, 0.02, (2, n))
    samples = np.stack([left, right]) * env + noise
    peak = np.max(np.abs(samples))
    return StereoWaveform(samples / peak * 0.5, sample_rate)


def write_corpus(directory, num_songs: int, seconds: float, seed0: int = 100):
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(num_songs):
        save_wav(make_song(seed0 + i, seconds), directory / f"song_{i:02d}.wav", "32f")
    return directory


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """4 short songs, enough for segment_len 16384 triplets."""
    return write_corpus(tmp_path_factory.mktemp("small_corpus"), 4, 2.0)


@pytest.fixture(scope="session")
def pretrain_corpus(tmp_path_factory):
    """8 songs of 21 s for [5, 10] s contrastive pairs."""
    return write_corpus(tmp_path_factory.mktemp("pretrain_corpus"), 8, 21.0)
