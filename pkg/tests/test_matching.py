from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_force_assignment
from trackid.errors import DomainError
from trackid.geometry import BoundingBox, iou_matrix
from trackid.matching import solve_min_cost, solve_with_threshold


def _check_valid(m, cost):
    rows = [i for i, _ in m.pairs]
    cols = [j for _, j in m.pairs]
    assert len(set(rows)) == len(rows) and len(set(cols)) == len(cols)
    for i, j in m.pairs:
        assert math.isfinite(cost[i, j])
    assert sorted(rows + list(m.unmatched_rows)) == list(range(cost.shape[0]))
    assert sorted(cols + list(m.unmatched_cols)) == list(range(cost.shape[1]))


def test_single():
    m = solve_min_cost([[3.0]])
    assert m.pairs == ((0, 0),) and m.cost == 3.0


def test_two_by_two():
    m = solve_min_cost([[1, 10], [10, 1]])
    assert set(m.pairs) == {(0, 0), (1, 1)} and m.cost == 2.0


def test_empty():
    m = solve_min_cost(np.zeros((0, 3)))
    assert m.pairs == () and m.unmatched_cols == (0, 1, 2)
    assert solve_min_cost([]).pairs == ()


def test_all_forbidden():
    m = solve_min_cost([[math.inf, math.inf]])
    assert m.pairs == () and m.unmatched_rows == (0,)


def test_rejects_nan_and_neg_inf():
    with pytest.raises(DomainError):
        solve_min_cost([[math.nan]])
    with pytest.raises(DomainError):
        solve_min_cost([[-math.inf]])


def test_threshold_examples():
    m = solve_with_threshold([[1, 10], [10, 1]], 5)
    assert set(m.pairs) == {(0, 0), (1, 1)}
    m = solve_with_threshold([[9.0]], 5)
    assert m.pairs == () and m.unmatched_rows == (0,) and m.unmatched_cols == (0,)


def test_threshold_iou_cutoff():
    a = np.array([[10, 10, 10, 10], [50, 50, 10, 10], [90, 90, 10, 10]], float)
    b = a + np.array([[0.2, 0, 0, 0], [2.0, 0, 0, 0], [0, 0, 0.5, 0]])
    ious = iou_matrix(a, b)
    m = solve_with_threshold(1.0 - ious, 1.0 - 0.8)
    for i, j in m.pairs:
        assert ious[i, j] >= 0.8 - 1e-12
    assert (1, 1) not in m.pairs  # shifted by 2 px on a 10 px box: IoU 0.667


def test_prefers_cardinality():
    # cheaper to leave row 1 out, but the solver must match both rows
    m = solve_min_cost([[0, 1], [math.inf, 100]])
    assert set(m.pairs) == {(0, 0), (1, 1)}


def test_random_vs_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(300):
        n, k = rng.integers(1, 6, 2)
        c = rng.integers(0, 20, (n, k)).astype(float)
        c[rng.random((n, k)) < 0.2] = math.inf
        m = solve_min_cost(c)
        _check_valid(m, c)
        card, cost = brute_force_assignment(c)
        assert len(m.pairs) == card
        assert m.cost == pytest.approx(cost, abs=1e-9)


@given(arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 5)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)),
       st.floats(-50, 50))
def test_row_shift_invariance(c, k):
    m0 = solve_min_cost(c)
    shifted = c.copy()
    shifted[0] += k
    m1 = solve_min_cost(shifted)
    # the optimum value moves by exactly k when row 0 is matched (it always is when rows <= cols)
    if c.shape[0] <= c.shape[1]:
        assert m1.cost == pytest.approx(m0.cost + k, abs=1e-6)


@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(0, 1, allow_nan=False)), st.floats(0, 1))
def test_threshold_never_forbidden(c, thr):
    m = solve_with_threshold(c, thr)
    for i, j in m.pairs:
        assert c[i, j] <= thr
