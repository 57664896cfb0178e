"""Exact minimum-cost bipartite assignment.

Forbidden pairs are encoded as ``+inf``. The solver first maximises the number
of admissible pairs, then minimises their total cost, by padding the matrix to a
square with a finite sentinel large enough never to trade against real costs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int], ...]
    unmatched_rows: tuple[int, ...]
    unmatched_cols: tuple[int, ...]
    cost: float

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)


def _hungarian_square(c: np.ndarray) -> list[int]:
    """Shortest-augmenting-path Hungarian method; returns column per row."""
    n = c.shape[0]
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[col] = row matched to col (1-based, 0 = free)
    way = [0] * (n + 1)
    rows = c.tolist()
    inf = float("inf")
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of = [0] * n
    for j in range(1, n + 1):
        if p[j]:
            col_of[p[j] - 1] = j - 1
    return col_of


def solve_min_cost(cost) -> Matching:
    """Minimum-cost maximum-cardinality matching avoiding ``+inf`` entries."""
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        if c.size == 0:
            c = c.reshape(0, 0)
        else:
            raise DomainError(f"cost must be 2-D, got shape {c.shape}")
    r, k = c.shape
    if np.any(np.isnan(c)) or np.any(c == -np.inf):
        raise DomainError("cost entries must be finite or +inf")
    if r == 0 or k == 0:
        return Matching((), tuple(range(r)), tuple(range(k)), 0.0)
    finite = np.isfinite(c)
    if not finite.any():
        return Matching((), tuple(range(r)), tuple(range(k)), 0.0)
    lo = c[finite].min()
    span = c[finite].max() - lo
    sentinel = (span + 1.0) * (r + k)
    n = max(r, k)
    padded = np.full((n, n), sentinel)
    padded[:r, :k] = np.where(finite, c - lo, sentinel)
    col_of = _hungarian_square(padded)
    pairs = []
    total = 0.0
    for i in range(r):
        j = col_of[i]
        if j < k and finite[i, j]:
            pairs.append((i, j))
            total += float(c[i, j])
    got_rows = {i for i, _ in pairs}
    got_cols = {j for _, j in pairs}
    return Matching(
        tuple(pairs),
        tuple(i for i in range(r) if i not in got_rows),
        tuple(j for j in range(k) if j not in got_cols),
        total,
    )


def solve_with_threshold(cost, reject_above: float) -> Matching:
    """As :func:`solve_min_cost`, treating entries above ``reject_above`` as forbidden."""
    c = np.array(cost, dtype=float)
    if c.size:
        c[c > reject_above] = np.inf
    return solve_min_cost(c)
