"""Input-representation transforms: periodogram PSD tiles and channel
reorderings (similarity-ranked via classical MDS, or seeded random).

Periodogram convention, fixed so oracle tests are possible: density
scaling P[f] = |DFT(x)[f]|^2 / (fs*N), one-sided with doubling for
0 < f < Nyquist. Tiles drop the DC column; an odd-length window has no
exact Nyquist bin, so a zero column stands in for it. A 1 s window at
125 Hz therefore yields 63 columns and a 2 s window 125, the same square
shape as the raw tile.
"""
import json
from dataclasses import dataclass

import numpy as np

from .dataio import TileImage
from .errors import FormatError, ShapeError


@dataclass
class ChannelOrdering:
    permutation: np.ndarray  # row i of the reordered tile = row permutation[i]
    origin: str              # "default" | "mds" | "random(<seed>)"
    embedding: np.ndarray | None = None  # 1-D MDS coordinates, when applicable
    degenerate: bool = False

    def __post_init__(self):
        perm = np.asarray(self.permutation, dtype=np.int64)
        n = perm.shape[0]
        if sorted(perm.tolist()) != list(range(n)):
            raise ValueError(f"permutation is not a bijection on [0, {n})")
        self.permutation = perm


def default_order(channels):
    return ChannelOrdering(np.arange(channels), "default")


def random_order(channels, seed):
    perm = np.random.default_rng(seed).permutation(channels)
    return ChannelOrdering(perm, f"random({seed})")


def apply_ordering(tile, ordering):
    if len(ordering.permutation) != tile.rows:
        raise ShapeError(
            f"ordering covers {len(ordering.permutation)} channels but the "
            f"tile has {tile.rows} rows")
    return TileImage(values=tile.values[ordering.permutation], kind=tile.kind)


def save_ordering(ordering, path):
    with open(path, "w") as fh:
        json.dump({"origin": ordering.origin,
                   "permutation": ordering.permutation.tolist()}, fh)
        fh.write("\n")


def load_ordering(path):
    with open(path) as fh:
        raw = json.load(fh)
    try:
        return ChannelOrdering(np.asarray(raw["permutation"], dtype=np.int64),
                               str(raw["origin"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad ordering file {path}: {exc}") from exc


def onesided_periodogram(x, fs):
    """Density periodogram of one window, all one-sided bins incl. DC."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    spec = np.fft.rfft(x, axis=-1)
    p = (spec.real**2 + spec.imag**2) / (fs * n)
    if n % 2 == 0:
        p[..., 1:-1] *= 2.0  # Nyquist bin exists and is not doubled
    else:
        p[..., 1:] *= 2.0
    return p


def periodogram_tile(tile, sampling_rate):
    """Per-channel full-window periodogram of a raw tile.

    The FFT window is the whole tile width; output columns are the
    one-sided bins above DC (zero-padded Nyquist column for odd widths).
    """
    if tile.kind != "raw":
        raise ValueError(f"expected a raw tile, got kind {tile.kind!r}")
    n = tile.cols
    if n < 4:
        raise ShapeError(f"window of {n} samples is too short for a periodogram")
    p = onesided_periodogram(tile.values, sampling_rate)
    out = p[:, 1:]
    if n % 2 == 1:
        out = np.concatenate([out, np.zeros((tile.rows, 1))], axis=1)
    return TileImage(values=out.astype(np.float32), kind="psd")


def rms_channel_features(example_set):
    """Per-channel envelope features: row c holds the RMS of channel c in
    every training example (feature length = number of examples)."""
    if not example_set.examples:
        raise ShapeError("cannot derive channel features from an empty set")
    tiles = np.stack([ex.tile.values for ex in example_set.examples])
    # tiles: (examples, channels, samples) -> (channels, examples)
    return np.sqrt(np.mean(np.square(tiles, dtype=np.float64), axis=2)).T


def _power_iteration(mat, tol=1e-10, max_iter=10_000):
    """Dominant eigenpair of a symmetric PSD matrix, deterministically.

    The all-ones vector lies in the nullspace of a double-centered matrix,
    so the fixed start vector is the unit-normalized ramp 1..n instead.
    """
    n = mat.shape[0]
    v = np.arange(1.0, n + 1.0)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = mat @ v
        lam = np.linalg.norm(w)
        if lam < 1e-12:
            return 0.0, None  # degenerate: v is (numerically) in the nullspace
        w /= lam
        if np.linalg.norm(w - v) < tol:
            return lam, w
        v = w
    return lam, v


def mds_order_from_features(features):
    """Rank channels by a 1-D classical MDS embedding of their pairwise
    Euclidean feature distances.

    Double-centers the squared distance matrix (-1/2 J D^2 J), extracts the
    dominant eigenvector by power iteration, scales by sqrt(eigenvalue),
    fixes the global sign so channel 0 sits at or above the median, and
    sorts ascending with ties broken by channel index.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if n < 2:
        raise ShapeError(f"need at least 2 channels, got {n}")
    sq = np.sum(features**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (features @ features.T)
    np.maximum(d2, 0.0, out=d2)
    row_mean = d2.mean(axis=1)
    b = -0.5 * (d2 - row_mean[:, None] - row_mean[None, :] + row_mean.mean())

    scale = np.abs(b).max()
    if scale == 0.0:  # all channels identical
        return ChannelOrdering(np.arange(n), "mds",
                               embedding=np.zeros(n), degenerate=True)
    lam, v = _power_iteration(b / scale)
    if v is None:
        return ChannelOrdering(np.arange(n), "mds",
                               embedding=np.zeros(n), degenerate=True)
    coords = np.sqrt(lam * scale) * v
    if coords[0] < np.median(coords):
        coords = -coords
    perm = np.argsort(coords, kind="stable")
    return ChannelOrdering(perm, "mds", embedding=coords)


def mds_channel_order(train_set):
    """MDS ordering derived from the RMS envelope features of a train set."""
    return mds_order_from_features(rms_channel_features(train_set))
