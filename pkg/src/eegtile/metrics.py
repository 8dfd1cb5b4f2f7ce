"""Classification metrics and the validation suite: confusion matrices,
accuracy / macro precision / macro F1 / Cohen's kappa, enjoyment-rating
binning, label- and weight-permutation chance tests, and the
tempo-difference confusion analysis.
"""
import json
from dataclasses import dataclass

import numpy as np

from .model import copy_params, named_params
from .train import evaluate

ENJOYMENT_CLASSES = ("low", "medium", "high")


@dataclass
class MetricsReport:
    accuracy: float
    precision_macro: float
    f1_macro: float
    kappa: float
    degenerate_kappa: bool = False


@dataclass
class PermutationResult:
    mode: str  # "labels" | "weights"
    accuracies: np.ndarray

    @property
    def mean(self):
        """Mean accuracy over trials; None marks an empty distribution."""
        if self.accuracies.size == 0:
            return None
        return float(self.accuracies.mean())


@dataclass
class BpmAnalysis:
    mean_confused_bpm_diff: float | None  # None when cm is diagonal-only
    chance_bpm_diff: float
    sorted_cm: np.ndarray
    sorted_classes: np.ndarray  # class indices in ascending-BPM order


def confusion_matrix(y_true, y_pred, classes):
    """Integer [classes x classes] matrix, rows = true, cols = predicted."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(
            f"label shapes differ: {y_true.shape} vs {y_pred.shape}")
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def metrics(cm):
    """MetricsReport from a confusion matrix.

    Per-class precision/recall treat an empty column/row as 0; macro
    averages are unweighted means over classes. Kappa is
    (p_o - p_e) / (1 - p_e) with marginal-product expected agreement;
    p_e = 1 degenerates to kappa 0 with a flag.
    """
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    diag = np.diag(cm)
    col = cm.sum(axis=0)
    row = cm.sum(axis=1)
    accuracy = diag.sum() / total
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / col, 0.0)
        recall = np.where(row > 0, diag / row, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    p_e = float((row * col).sum() / total**2)
    if p_e >= 1.0:
        kappa, degenerate = 0.0, True
    else:
        kappa, degenerate = (accuracy - p_e) / (1.0 - p_e), False
    return MetricsReport(
        accuracy=float(accuracy),
        precision_macro=float(precision.mean()),
        f1_macro=float(f1.mean()),
        kappa=float(kappa),
        degenerate_kappa=degenerate,
    )


def bin_enjoyment(rating):
    """Equal-width rating tertiles: 1-3 low, 4-6 medium, 7-9 high."""
    if not isinstance(rating, (int, np.integer)) or not 1 <= rating <= 9:
        raise ValueError(f"rating must be an integer in 1..9, got {rating!r}")
    return ENJOYMENT_CLASSES[(int(rating) - 1) // 3]


def bin_enjoyment_index(rating):
    return ENJOYMENT_CLASSES.index(bin_enjoyment(rating))


def permutation_test_labels(params, test_set, trials, seed):
    """Chance baseline: re-score fixed predictions against uniformly
    permuted labels, one permutation per trial."""
    preds, _ = evaluate(params, test_set)
    if isinstance(test_set, tuple):
        labels = np.asarray(test_set[1], dtype=np.int64)
    else:
        labels = test_set.labels()
    accs = np.empty(trials)
    for t in range(trials):
        rng = np.random.default_rng(seed + t)
        accs[t] = float((preds == labels[rng.permutation(labels.size)]).mean())
    return PermutationResult(mode="labels", accuracies=accs)


def _shuffle_params(params, rng):
    shuffled = copy_params(params)
    for _, arr in named_params(shuffled):
        flat = arr.ravel()
        flat[:] = flat[rng.permutation(flat.size)]
    return shuffled


def permutation_test_weights(params, test_set, trials, seed):
    """Chance baseline: shuffle the elements within each parameter array of
    a copy of the model (original untouched) and re-evaluate."""
    accs = np.empty(trials)
    for t in range(trials):
        rng = np.random.default_rng(seed + t)
        _, accs[t] = evaluate(_shuffle_params(params, rng), test_set)
    return PermutationResult(mode="weights", accuracies=accs)


def bpm_confusion_analysis(cm, metas):
    """Tempo distances of the confused pairs vs the all-pairs chance level,
    plus the matrix reindexed by ascending BPM.

    metas: per-class SongMeta (list indexed by class, or dict by song_id);
    every class needs a bpm.
    """
    cm = np.asarray(cm)
    k = cm.shape[0]
    bpm = np.empty(k)
    for c in range(k):
        meta = metas[c]
        if meta is None or meta.bpm is None:
            raise ValueError(f"class {c} has no bpm in the song metadata")
        bpm[c] = meta.bpm
    diff = np.abs(bpm[:, None] - bpm[None, :])
    off = ~np.eye(k, dtype=bool)
    confused = cm * off
    n_confused = confused.sum()
    if n_confused > 0:
        mean_confused = float((confused * diff).sum() / n_confused)
    else:
        mean_confused = None
    chance = float(diff[off].mean())
    order = np.argsort(bpm, kind="stable")
    sorted_cm = cm[np.ix_(order, order)]
    return BpmAnalysis(mean_confused_bpm_diff=mean_confused,
                       chance_bpm_diff=chance,
                       sorted_cm=sorted_cm,
                       sorted_classes=order)


def write_report(path, report, cm, extra=None):
    """report.json: metrics + confusion matrix + caller-provided metadata."""
    payload = {
        "accuracy": report.accuracy,
        "precision_macro": report.precision_macro,
        "f1_macro": report.f1_macro,
        "kappa": report.kappa,
        "degenerate_kappa": report.degenerate_kappa,
        "confusion_matrix": np.asarray(cm).tolist(),
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
