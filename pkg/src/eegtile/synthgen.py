"""Deterministic synthetic-EEG corpus generator.

Each class is a sum of amplitude-modulated carrier components. Component
frequencies come from a small shared menu (snapped to integer harmonics
of the class beat, so the noise-free signal stays exactly periodic at the
class tempo), but WHERE each component lives on the channel axis - a
smooth seeded topography bump with a smooth phase gradient - is class
specific. Class identity is therefore mostly a frequency-to-location
binding: with channels in their stored order the binding is geometric and
neighboring channels are redundant (local averaging beats the noise);
scrambling the channel order destroys both, which is what the
channel-ordering ablations probe.

Beat periods are integer sample counts (samples_per_beat = 45 + 5*class),
so tempos are distinct by construction and metadata BPMs are exact.
"""
from dataclasses import dataclass

import numpy as np

from .dataio import EegRecording, SongMeta, save_recording, save_song_meta


@dataclass
class SynthSpec:
    seed: int
    classes: int = 10
    participants: int = 2
    seconds: int = 240
    channels: int = 125
    rate: float = 125.0
    noise_sigma: float = 2.0
    am_depth: float = 0.3
    components: int = 3
    topo_base: float = 0.05
    topo_width_frac: float = 0.09  # bump width as a fraction of channels

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least 2 classes")
        if self.participants < 1 or self.channels < 2:
            raise ValueError("need at least 1 participant and 2 channels")


@dataclass
class ClassSignature:
    tempo_bpm: float
    beat_hz: float
    carrier_hz: np.ndarray      # one value per component
    topography: np.ndarray      # [components x channels] smooth weights
    phase_per_channel: np.ndarray  # radians per channel step, per component


def signatures(spec):
    """Per-class signal signatures, fully determined by the spec."""
    rng = np.random.default_rng(spec.seed)
    sigs = []
    ch = np.arange(spec.channels)
    width = max(2.0, spec.topo_width_frac * spec.channels)
    # shared frequency menu; classes differ in where each entry lives
    menu = spec.rate * (0.12 + 0.08 * np.arange(spec.components))
    for c in range(spec.classes):
        samples_per_beat = 45 + 5 * c
        beat = spec.rate / samples_per_beat
        harmonics = np.maximum(2, np.round(menu * samples_per_beat / spec.rate))
        centers = rng.uniform(0.08, 0.92, spec.components) * spec.channels
        topo = spec.topo_base + np.exp(
            -0.5 * ((ch[None, :] - centers[:, None]) / width) ** 2)
        phases = rng.uniform(0.1, 0.3, spec.components) \
            * rng.choice([-1.0, 1.0], spec.components)
        sigs.append(ClassSignature(
            tempo_bpm=60.0 * beat,
            beat_hz=beat,
            carrier_hz=harmonics * beat,
            topography=topo,
            phase_per_channel=phases,
        ))
    return sigs


def class_signal(spec, sig, noise_rng=None):
    """One [channels x samples] realization of a class signal."""
    n = int(round(spec.seconds * spec.rate))
    t = np.arange(n) / spec.rate
    am = 1.0 + spec.am_depth * np.sin(2 * np.pi * sig.beat_hz * t)
    x = np.zeros((spec.channels, n))
    for j in range(len(sig.carrier_hz)):
        carr_sin = np.sin(2 * np.pi * sig.carrier_hz[j] * t) * am
        carr_cos = np.cos(2 * np.pi * sig.carrier_hz[j] * t) * am
        ph = sig.phase_per_channel[j] * np.arange(spec.channels)
        # sin(w t + ph) * am as two rank-1 outer products
        x += np.outer(sig.topography[j] * np.cos(ph), carr_sin)
        x += np.outer(sig.topography[j] * np.sin(ph), carr_cos)
    if noise_rng is not None and spec.noise_sigma > 0:
        x = x + spec.noise_sigma * noise_rng.standard_normal(x.shape)
    return x.astype(np.float32)


def generate(spec):
    """All participant x class recordings plus the song metadata sidecar."""
    sigs = signatures(spec)
    rng = np.random.default_rng(spec.seed)
    metas = []
    for c, sig in enumerate(sigs):
        metas.append(SongMeta(
            song_id=c,
            bpm=sig.tempo_bpm,
            enjoyment=int(rng.integers(1, 10)),
            familiarity=int(rng.integers(1, 4)),
        ))
    recordings = []
    for p in range(spec.participants):
        for c, sig in enumerate(sigs):
            noise_rng = np.random.default_rng([spec.seed, 1000 + p, c])
            recordings.append(EegRecording(
                participant_id=f"p{p:02d}",
                song_id=c,
                sampling_rate=spec.rate,
                data=class_signal(spec, sig, noise_rng),
            ))
    return recordings, metas


def write_corpus(spec, out_dir):
    """Write every recording (p??_s??.egtr) and songs.json into out_dir."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    recordings, metas = generate(spec)
    for rec in recordings:
        save_recording(rec, out / f"{rec.participant_id}_s{rec.song_id:02d}.egtr")
    save_song_meta(metas, out / "songs.json")
    return recordings, metas
