"""Compiled inner loops for histogram tree growth.

Binned data is feature-major ``(n_features, n_samples)`` uint8. Histograms
are flat ``(total_bins, 3)`` float64 arrays; feature ``j`` owns rows
``offsets[j] : offsets[j] + nbins[j]``. The three statistics are gradient,
hessian and sample count for boosting, or positive weight, weight and weight
for the forest.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def build_histogram(binned, offsets, total_bins, rows, s0, s1, s2):
    hist = np.zeros((total_bins, 3))
    for j in range(binned.shape[0]):
        off = offsets[j]
        col = binned[j]
        for r in rows:
            b = off + col[r]
            hist[b, 0] += s0[r]
            hist[b, 1] += s1[r]
            hist[b, 2] += s2[r]
    return hist


@njit(cache=True)
def best_gbdt_split(hist, offsets, nbins, G, H, C, lam, min_leaf):
    """Best ``(gain, feature, bin)`` by second-order gain; feature -1 if none.

    Gain is ``GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)`` (without the 1/2
    factor). Ties keep the lowest feature, then the lowest bin.
    """
    parent = G * G / (H + lam)
    best_gain = 0.0
    best_f = -1
    best_b = -1
    for j in range(offsets.shape[0]):
        off = offsets[j]
        gl = 0.0
        hl = 0.0
        cl = 0.0
        for b in range(nbins[j] - 1):
            gl += hist[off + b, 0]
            hl += hist[off + b, 1]
            cl += hist[off + b, 2]
            if cl < min_leaf:
                continue
            cr = C - cl
            if cr < min_leaf:
                break
            gr = G - gl
            hr = H - hl
            gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
            if gain > best_gain:
                best_gain = gain
                best_f = j
                best_b = b
    return best_gain, best_f, best_b


@njit(cache=True)
def best_gini_split(binned, nbins, rows, pos_w, w, perm, max_features, min_leaf):
    """Best Gini split over features visited in ``perm`` order.

    Visiting stops once ``max_features`` features that are non-constant in
    the node have been examined. Returns ``(impurity decrease, feature, bin)``;
    feature is -1 when no valid split exists.
    """
    max_b = 0
    for j in range(nbins.shape[0]):
        if nbins[j] > max_b:
            max_b = nbins[j]
    hp = np.zeros(max_b)
    hw = np.zeros(max_b)
    P = 0.0
    W = 0.0
    for r in rows:
        P += pos_w[r]
        W += w[r]
    parent = 2.0 * P * (W - P) / W
    best = -np.inf
    best_f = -1
    best_b = -1
    visited = 0
    for j in perm:
        nb = nbins[j]
        for b in range(nb):
            hp[b] = 0.0
            hw[b] = 0.0
        col = binned[j]
        for r in rows:
            hp[col[r]] += pos_w[r]
            hw[col[r]] += w[r]
        nonempty = 0
        for b in range(nb):
            if hw[b] > 0:
                nonempty += 1
        if nonempty < 2:
            continue
        visited += 1
        pl = 0.0
        wl = 0.0
        for b in range(nb - 1):
            pl += hp[b]
            wl += hw[b]
            if wl < min_leaf:
                continue
            wr = W - wl
            if wr < min_leaf:
                break
            if hw[b] == 0:
                # same partition as the previous bin
                continue
            pr = P - pl
            child = 2.0 * pl * (wl - pl) / wl + 2.0 * pr * (wr - pr) / wr
            dec = parent - child
            if dec > best:
                best = dec
                best_f = j
                best_b = b
        if visited >= max_features:
            break
    return best, best_f, best_b
