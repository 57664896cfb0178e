"""Slow, independent reference implementations and instance generators used only by the tests."""
from __future__ import annotations

import itertools
import math

import numpy as np


def raster_iou(a, b, step: float = 0.01) -> float:
    """IoU by counting cell centres of a fine grid inside each box."""
    x1 = min(a[0] - a[2] / 2, b[0] - b[2] / 2)
    x2 = max(a[0] + a[2] / 2, b[0] + b[2] / 2)
    y1 = min(a[1] - a[3] / 2, b[1] - b[3] / 2)
    y2 = max(a[1] + a[3] / 2, b[1] + b[3] / 2)
    xs = np.arange(x1 + step / 2, x2, step)
    ys = np.arange(y1 + step / 2, y2, step)
    X, Y = np.meshgrid(xs, ys)

    def inside(r):
        return ((X >= r[0] - r[2] / 2) & (X < r[0] + r[2] / 2)
                & (Y >= r[1] - r[3] / 2) & (Y < r[1] + r[3] / 2))

    ia, ib = inside(a), inside(b)
    union = np.count_nonzero(ia | ib)
    return np.count_nonzero(ia & ib) / union if union else 0.0


def brute_force_assignment(cost: np.ndarray) -> tuple[int, float]:
    """(max cardinality, min cost at that cardinality) over all partial matchings avoiding inf."""
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    best = (0, 0.0)
    if n == 0 or m == 0:
        return best
    transpose = n > m
    c = cost.T if transpose else cost
    n, m = c.shape
    for perm in itertools.permutations(range(m), n):
        pairs = [(i, perm[i]) for i in range(n) if math.isfinite(c[i, perm[i]])]
        card = len(pairs)
        total = math.fsum(c[i, j] for i, j in pairs)
        if card > best[0] or (card == best[0] and total < best[1]):
            best = (card, total)
    return best


def enumerate_ilp(weights: np.ndarray, membership, J: int):
    """Exhaustive optimum of the identification problem; None when infeasible.

    Real rows pick any column; hidden row (t, j) is forced on exactly when no
    real tracklet active in interval t took identity j.
    """
    W = np.asarray(weights, dtype=float)
    T = len(membership)
    I = W.shape[0] - T
    best = None
    for cols in itertools.product(range(J + 1), repeat=I):
        total = 0.0
        ok = True
        for i, c in enumerate(cols):
            if W[i, c] == -math.inf:
                ok = False
                break
            total += W[i, c]
        if not ok:
            continue
        for t, rows in enumerate(membership):
            taken = [cols[i] for i in rows if cols[i] < J]
            if len(taken) != len(set(taken)):
                ok = False
                break
            for j in range(J):
                if j not in taken:
                    if W[I + t, j] == -math.inf:
                        ok = False
                        break
                    total += W[I + t, j]
            if not ok:
                break
        if ok and (best is None or total > best[0]):
            best = (total, cols)
    return best


def kalman_1d(mean: float, var: float, z: float, r: float) -> tuple[float, float]:
    """Scalar Kalman correction."""
    k = var / (var + r)
    return mean + k * (z - mean), (1 - k) * var


def gaussian_logpdf(x, mean, cov) -> float:
    """Log density by explicit inverse and determinant."""
    d = np.asarray(x, float) - np.asarray(mean, float)
    cov = np.asarray(cov, float)
    return float(-0.5 * (d @ np.linalg.inv(cov) @ d) - 0.5 * np.log(np.linalg.det(2 * np.pi * cov)))


def random_problem(rng, max_i: int = 6, max_t: int = 4, max_j: int = 3, p_forbid: float = 0.1):
    """Random identification instance with contiguous interval memberships."""
    from trackid.identifier import IdentificationProblem
    T = int(rng.integers(1, max_t + 1))
    I = int(rng.integers(0, max_i + 1))
    J = int(rng.integers(1, max_j + 1))
    membership = []
    for _ in range(I):
        a = int(rng.integers(0, T))
        b = int(rng.integers(a, T))
        membership.append(tuple(range(a, b + 1)))
    W = rng.normal(-5.0, 3.0, (I + T, J + 1))
    W[rng.random(W.shape) < p_forbid] = -math.inf
    W[I:, J] = -math.inf
    return IdentificationProblem(W, membership, J)
