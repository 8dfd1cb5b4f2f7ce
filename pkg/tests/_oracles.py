"""Independent oracles shared by the test modules.

These deliberately avoid the library code paths they are used to check:
finite differences for gradients, an O(N^2) DFT for the periodogram, a
pairwise-agreement reconstruction for Cohen's kappa.
"""
import numpy as np


def central_diff_grad(f, x, step=1e-3):
    """Central finite differences of scalar f at float64 array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def rel_err(got, want):
    """Max abs deviation normalized by the oracle's largest magnitude."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    denom = np.abs(want).max()
    if denom == 0.0:
        return np.abs(got).max()
    return np.abs(got - want).max() / denom


def naive_periodogram(x, fs):
    """One-sided density periodogram via an explicit O(N^2) DFT.

    Returns all bins including DC: P[f] = c_f |X[f]|^2 / (fs N) with
    c_f = 2 except at DC and (for even N) the Nyquist bin.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    nbins = n // 2 + 1
    p = np.zeros(nbins)
    for k in range(nbins):
        re = 0.0
        im = 0.0
        for t in range(n):
            ang = -2.0 * np.pi * k * t / n
            re += x[t] * np.cos(ang)
            im += x[t] * np.sin(ang)
        p[k] = (re * re + im * im) / (fs * n)
        if 0 < k and not (n % 2 == 0 and k == n // 2):
            p[k] *= 2.0
    return p


def kappa_bruteforce(cm):
    """Cohen's kappa recomputed from reconstructed (true, pred) pairs."""
    cm = np.asarray(cm)
    pairs = []
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            pairs.extend([(i, j)] * int(cm[i, j]))
    total = len(pairs)
    p_o = sum(1 for t, p in pairs if t == p) / total
    p_e = 0.0
    for c in range(cm.shape[0]):
        p_true = sum(1 for t, _ in pairs if t == c) / total
        p_pred = sum(1 for _, p in pairs if p == c) / total
        p_e += p_true * p_pred
    if p_e == 1.0:
        return 0.0
    return (p_o - p_e) / (1.0 - p_e)
