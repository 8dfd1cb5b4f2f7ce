"""Recording container, song metadata, and the chunk/split pipeline that
turns recordings into deterministic train/test example sets.

A recording is split into fixed-length chunks (default 5 s over the first
240 s), chunks are assigned train/test by a cyclic pattern that realizes
the train ratio while interleaving both sets across time (3/4 ->
train,train,train,test repeating), and each chunk is cut into 1 s tiles.
Nothing here shuffles; presentation order is the trainer's job.
"""
import json
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    FormatError,
    ShapeError,
    TooShortError,
    TruncatedPayloadError,
)

RECORDING_MAGIC = b"EGTR1\0"
RECORDING_VERSION = 1


@dataclass
class TileImage:
    """A [channels x samples] or [channels x frequency-bins] matrix."""

    values: np.ndarray
    kind: str = "raw"  # "raw" | "psd"

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]


@dataclass
class EegRecording:
    participant_id: str
    song_id: int
    sampling_rate: float
    data: np.ndarray  # [channels x samples] float32

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def samples(self):
        return self.data.shape[1]

    @property
    def seconds(self):
        return self.samples / self.sampling_rate


@dataclass
class SongMeta:
    song_id: int
    bpm: float | None = None
    enjoyment: int | None = None
    familiarity: int | None = None


@dataclass
class Example:
    tile: TileImage
    label: int
    # (participant, song, chunk index, second offset from recording start)
    provenance: tuple


@dataclass
class ExampleSet:
    split: str  # "train" | "test"
    examples: list = field(default_factory=list)

    def __len__(self):
        return len(self.examples)

    def labels(self):
        return np.array([ex.label for ex in self.examples], dtype=np.int64)

    def stacked(self):
        """All tiles as one NHWC float32 tensor plus the label vector."""
        if not self.examples:
            raise ShapeError(f"{self.split} set is empty")
        tiles = np.stack([ex.tile.values for ex in self.examples])
        return tiles[..., None].astype(np.float32, copy=False), self.labels()

    def extend(self, other):
        if other.split != self.split:
            raise ValueError(f"cannot merge {other.split} into {self.split}")
        self.examples.extend(other.examples)


def save_recording(rec, path):
    """Write the binary recording container (all little-endian)."""
    pid = rec.participant_id.encode("utf-8")
    data = np.ascontiguousarray(rec.data, dtype="<f4")
    if data.ndim != 2:
        raise ShapeError(f"recording data must be 2-D, got {data.shape}")
    with open(path, "wb") as fh:
        fh.write(RECORDING_MAGIC)
        fh.write(struct.pack("<IIQf", RECORDING_VERSION, data.shape[0],
                             data.shape[1], rec.sampling_rate))
        fh.write(struct.pack("<H", len(pid)))
        fh.write(pid)
        fh.write(struct.pack("<H", rec.song_id))
        fh.write(data.tobytes())


def _read_exact(fh, n, what):
    raw = fh.read(n)
    if len(raw) != n:
        raise TruncatedPayloadError(
            f"recording ends inside {what}: wanted {n} bytes, got {len(raw)}")
    return raw


def load_recording(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(RECORDING_MAGIC))
        if magic != RECORDING_MAGIC:
            raise BadMagicError(
                f"not a recording container: magic {magic!r} != {RECORDING_MAGIC!r}")
        version, channels, samples, rate = struct.unpack(
            "<IIQf", _read_exact(fh, 20, "header"))
        if version != RECORDING_VERSION:
            raise FormatError(f"unsupported container version {version}")
        if channels == 0 or samples == 0:
            raise FormatError(f"degenerate dims {channels}x{samples}")
        if rate <= 0:
            raise FormatError(f"non-positive sampling rate {rate}")
        (pid_len,) = struct.unpack("<H", _read_exact(fh, 2, "header"))
        pid = _read_exact(fh, pid_len, "participant id").decode("utf-8")
        (song_id,) = struct.unpack("<H", _read_exact(fh, 2, "header"))
        payload = fh.read()
    want = channels * samples * 4
    if len(payload) < want:
        raise TruncatedPayloadError(
            f"payload holds {len(payload)} bytes but header promises "
            f"{channels}x{samples} samples ({want} bytes)")
    if len(payload) > want:
        raise FormatError(
            f"{len(payload) - want} trailing bytes after the payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(channels, samples)
    return EegRecording(participant_id=pid, song_id=song_id,
                        sampling_rate=float(rate),
                        data=data.astype(np.float32))


def save_song_meta(metas, path):
    rows = [{"song_id": m.song_id, "bpm": m.bpm, "enjoyment": m.enjoyment,
             "familiarity": m.familiarity} for m in metas]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_song_meta(path):
    with open(path) as fh:
        rows = json.load(fh)
    if not isinstance(rows, list):
        raise FormatError("song metadata must be a JSON array")
    metas = {}
    for row in rows:
        try:
            m = SongMeta(song_id=int(row["song_id"]),
                         bpm=None if row.get("bpm") is None else float(row["bpm"]),
                         enjoyment=row.get("enjoyment"),
                         familiarity=row.get("familiarity"))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad song metadata row {row!r}: {exc}") from exc
        if m.bpm is not None and m.bpm <= 0:
            raise FormatError(f"song {m.song_id}: bpm must be positive")
        metas[m.song_id] = m
    return metas


def decimate(rec, target_rate):
    """Downsample by windowed means (k = rate ratio samples per window)."""
    ratio = rec.sampling_rate / target_rate
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-9:
        raise FormatError(
            f"sampling rate {rec.sampling_rate} is not an integer multiple "
            f"of target rate {target_rate}")
    if k == 1:
        return EegRecording(rec.participant_id, rec.song_id,
                            float(target_rate), rec.data.copy())
    n = rec.samples // k
    trimmed = rec.data[:, :n * k]
    out = trimmed.reshape(rec.channels, n, k).mean(axis=2, dtype=np.float64)
    return EegRecording(rec.participant_id, rec.song_id, float(target_rate),
                        out.astype(np.float32))


def _samples_per_second(rec):
    rate = round(rec.sampling_rate)
    if abs(rec.sampling_rate - rate) > 1e-6 or rate <= 0:
        raise FormatError(
            f"tiling needs an integer sampling rate, got {rec.sampling_rate}")
    return rate


def make_tile(rec, second_offset, length_seconds=1):
    """Raw-amplitude tile: rows = channels in stored order, columns =
    consecutive samples. No normalization or quantization."""
    rate = _samples_per_second(rec)
    start = second_offset * rate
    stop = start + length_seconds * rate
    if second_offset < 0 or stop > rec.samples:
        raise TooShortError(
            f"window [{second_offset}s, {second_offset + length_seconds}s) "
            f"needs sample range [{start}, {stop}) but recording has "
            f"{rec.samples} samples")
    return TileImage(values=rec.data[:, start:stop].copy(), kind="raw")


def split_pattern(train_ratio):
    """Cyclic train/test assignment with exact ratio, e.g. 3/4 ->
    (True, True, True, False)."""
    frac = Fraction(train_ratio).limit_denominator(1000)
    if not 0 < frac < 1:
        raise ValueError(f"train_ratio must be in (0, 1), got {train_ratio}")
    return tuple(i < frac.numerator for i in range(frac.denominator))


def chunk_and_split(rec, chunk_seconds=5, example_seconds=1, train_ratio=0.75,
                    use_seconds=240):
    """Deterministic split of one recording into train/test ExampleSets.

    Uses the first use_seconds, cuts them into chunk_seconds chunks,
    assigns chunks cyclically by split_pattern(train_ratio), then cuts
    each chunk into example_seconds tiles. 240 s at the defaults gives
    48 chunks -> 36 train + 12 test -> 180/60 examples.
    """
    if chunk_seconds % example_seconds != 0:
        raise ValueError(
            f"chunk length {chunk_seconds}s is not divisible by example "
            f"length {example_seconds}s")
    if use_seconds % chunk_seconds != 0:
        raise ValueError(
            f"use_seconds {use_seconds} is not divisible by chunk length "
            f"{chunk_seconds}")
    rate = _samples_per_second(rec)
    if rec.samples < use_seconds * rate:
        raise TooShortError(
            f"recording has {rec.samples} samples "
            f"({rec.samples / rate:.1f}s) but the split needs "
            f"{use_seconds * rate} ({use_seconds}s)")
    pattern = split_pattern(train_ratio)
    train = ExampleSet(split="train")
    test = ExampleSet(split="test")
    per_chunk = chunk_seconds // example_seconds
    for chunk_idx in range(use_seconds // chunk_seconds):
        dest = train if pattern[chunk_idx % len(pattern)] else test
        for e in range(per_chunk):
            offset = chunk_idx * chunk_seconds + e * example_seconds
            dest.examples.append(Example(
                tile=make_tile(rec, offset, example_seconds),
                label=rec.song_id,
                provenance=(rec.participant_id, rec.song_id, chunk_idx, offset),
            ))
    return train, test


def build_example_sets(recordings, **split_kwargs):
    """chunk_and_split over a corpus, concatenated in recording order."""
    train = ExampleSet(split="train")
    test = ExampleSet(split="test")
    for rec in recordings:
        tr, te = chunk_and_split(rec, **split_kwargs)
        train.extend(tr)
        test.extend(te)
    return train, test


def corpus_recording_paths(corpus_dir):
    """All recording containers in a corpus directory, sorted by name."""
    return sorted(Path(corpus_dir).glob("*.egtr"))
