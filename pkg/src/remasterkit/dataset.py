"""Self-supervised data fabrication.

Builds contrastive segment pairs for encoder pretraining and
(input A1, target A2, reference B2) triplets for cloner training, where A1
and A2 come from the same source slice under two different manipulations and
B2 is a different slice of the same song under the target manipulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import StereoWaveform, load_wav, save_wav, segment
from .fx import FxParams, ParamRanges, apply_chain, sample_fx_params

MIN_PAIR_SECONDS = 10.0  # longest contrastive segment
DEFAULT_SEGMENT_LEN = 131072  # ~2.97 s at 44.1 kHz


@dataclass(frozen=True)
class SongEntry:
    song_id: str
    path: str
    duration: float


@dataclass(frozen=True)
class TripletExample:
    input_a1: StereoWaveform
    target_a2: StereoWaveform
    reference_b2: StereoWaveform
    m1: FxParams
    m2: FxParams
    song_id: str
    segment_offsets: tuple  # (offset_a, offset_b)


def scan_corpus(directory, required_rate: int = 44100) -> list:
    """One SongEntry per decodable WAV at the project rate, lexicographic order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise NotADirectoryError(f"not a readable directory: {directory}")
    entries = []
    for path in sorted(directory.glob("*.wav")):
        try:
            wf = load_wav(path)
        except Exception:
            continue
        if required_rate is not None and wf.sample_rate != required_rate:
            continue
        entries.append(SongEntry(song_id=path.stem, path=str(path), duration=wf.duration))
    if not entries:
        raise ValueError(f"zero usable songs in {directory}")
    return entries


def make_contrastive_pair(
    song: SongEntry,
    rng: np.random.Generator,
    min_seconds: float = 5.0,
    max_seconds: float = 10.0,
    song_waveform: StereoWaveform = None,
):
    """Two independently placed segments of random length from one song."""
    wf = song_waveform if song_waveform is not None else load_wav(song.path)
    max_len = int(max_seconds * wf.sample_rate)
    if wf.num_samples < max_len:
        raise ValueError(
            f"song {song.song_id} too short: {wf.duration:.2f} s < {max_seconds} s"
        )
    segments = []
    for _ in range(2):
        length = int(rng.integers(int(min_seconds * wf.sample_rate), max_len + 1))
        start = int(rng.integers(0, wf.num_samples - length + 1))
        segments.append(segment(wf, start, length))
    return tuple(segments)


def _disjoint_offsets(rng: np.random.Generator, total: int, length: int):
    """Two non-overlapping slice offsets: one in the front half-space, one behind it."""
    if total < 2 * length:
        raise ValueError("song too short for two disjoint slices")
    offset_a = int(rng.integers(0, total - 2 * length + 1))
    offset_b = int(rng.integers(offset_a + length, total - length + 1))
    if rng.integers(0, 2):  # randomize which slice comes first in time
        offset_a, offset_b = offset_b, offset_a
    return offset_a, offset_b


def build_triplet(
    song: SongEntry,
    rng: np.random.Generator,
    segment_len: int = DEFAULT_SEGMENT_LEN,
    ranges: ParamRanges = ParamRanges(),
    song_waveform: StereoWaveform = None,
    chain_scope: str = "segment",
) -> TripletExample:
    """Fabricate one training triplet from disjoint slices of a song.

    chain_scope "segment" manipulates each slice on its own; "song" runs the
    chain over the whole song before slicing (slower, more limiter context).
    """
    wf = song_waveform if song_waveform is not None else load_wav(song.path)
    if wf.num_samples < 2 * segment_len:
        raise ValueError(
            f"song {song.song_id} too short for two {segment_len}-sample slices"
        )
    offset_a, offset_b = _disjoint_offsets(rng, wf.num_samples, segment_len)

    m1 = sample_fx_params(rng, ranges)
    m2 = sample_fx_params(rng, ranges)
    for _ in range(10):
        if m1.seed != m2.seed:
            break
        m2 = sample_fx_params(rng, ranges)
    else:
        raise RuntimeError("failed to draw distinct m1/m2 seeds after 10 attempts")

    if chain_scope == "song":
        song_m1 = apply_chain(wf, m1)
        song_m2 = apply_chain(wf, m2)
        a1 = segment(song_m1, offset_a, segment_len)
        a2 = segment(song_m2, offset_a, segment_len)
        b2 = segment(song_m2, offset_b, segment_len)
    elif chain_scope == "segment":
        slice_a = segment(wf, offset_a, segment_len)
        slice_b = segment(wf, offset_b, segment_len)
        a1 = apply_chain(slice_a, m1)
        a2 = apply_chain(slice_a, m2)
        b2 = apply_chain(slice_b, m2)
    else:
        raise ValueError(f"chain_scope must be 'segment' or 'song', got {chain_scope!r}")

    return TripletExample(
        input_a1=a1,
        target_a2=a2,
        reference_b2=b2,
        m1=m1,
        m2=m2,
        song_id=song.song_id,
        segment_offsets=(offset_a, offset_b),
    )


def triplet_rng(seed: int, index: int) -> np.random.Generator:
    """Per-triplet RNG stream; parallel and serial fabrication agree."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def fabricate(
    manifest: list,
    count: int,
    seed: int,
    out_dir,
    segment_len: int = DEFAULT_SEGMENT_LEN,
    ranges: ParamRanges = ParamRanges(),
) -> Path:
    """Write `count` triplets as 32-bit-float WAV trios plus a JSON-lines index.

    Songs are taken round-robin from the manifest. The same seed produces a
    byte-identical dataset. Returns the index path.
    """
    if not manifest:
        raise ValueError("manifest is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index_path = out_dir / "index.jsonl"

    records = []
    for i in range(count):
        song = manifest[i % len(manifest)]
        rng = triplet_rng(seed, i)
        triplet = build_triplet(song, rng, segment_len=segment_len, ranges=ranges)
        names = {
            "a1_path": f"{i:06d}_a1.wav",
            "a2_path": f"{i:06d}_a2.wav",
            "b2_path": f"{i:06d}_b2.wav",
        }
        save_wav(triplet.input_a1, out_dir / names["a1_path"], "32f")
        save_wav(triplet.target_a2, out_dir / names["a2_path"], "32f")
        save_wav(triplet.reference_b2, out_dir / names["b2_path"], "32f")
        records.append(
            {
                "song_id": triplet.song_id,
                **names,
                "offset_a": triplet.segment_offsets[0],
                "offset_b": triplet.segment_offsets[1],
                "m1": triplet.m1.to_dict(),
                "m2": triplet.m2.to_dict(),
                "seed": seed,
            }
        )
    with open(index_path, "w") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")
    return index_path


def read_index(index_path) -> list:
    with open(index_path) as f:
        return [json.loads(line) for line in f if line.strip()]
