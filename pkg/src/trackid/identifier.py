"""Identification of tracklets as an exact integer assignment problem.

Rows of the weight matrix are the I real tracklets followed by one hidden
tracklet per interval; columns are the J identities followed by the outlier.
A feasible assignment gives every real tracklet exactly one column, covers every
(interval, identity) pair exactly once by an active tracklet (real or hidden),
and never sends a hidden tracklet to the outlier.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, InfeasibleError
from .geometry import HIDDEN, BoundingBox
from .tracker import Tracklet
from .weights.model import Scorer

log = logging.getLogger(__name__)

NEG_INF = -math.inf


@dataclass(frozen=True)
class Interval:
    index: int
    start: int
    end: int
    active: frozenset[int]

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def decompose_intervals(tracklets: Sequence[Tracklet], span: tuple[int, int] | None = None
                        ) -> list[Interval]:
    """Split ``span`` wherever a tracklet is born or dies.

    Frames with no active tracklet still form intervals (with an empty set).
    """
    if span is None:
        if not tracklets:
            raise DataError("cannot infer a frame span without tracklets")
        span = (min(t.start for t in tracklets), max(t.end for t in tracklets))
    first, last = span
    if last < first:
        raise DataError(f"empty span {span}")
    cuts = {first, last + 1}
    for t in tracklets:
        if t.start < first or t.end > last:
            raise DataError(f"tracklet {t.id} [{t.start}, {t.end}] lies outside span {span}")
        cuts.add(t.start)
        cuts.add(t.end + 1)
    bounds = sorted(cuts)
    out = []
    for k, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        active = frozenset(t.id for t in tracklets if t.start <= a and t.end >= b - 1)
        out.append(Interval(k, a, b - 1, active))
    return out


@dataclass(eq=False)
class IdentificationProblem:
    """Weights W of shape (I + T, J + 1) plus interval membership of real rows."""

    weights: np.ndarray
    membership: list[tuple[int, ...]]
    J: int
    tracklet_ids: list[int] = field(default_factory=list)
    intervals: list[Interval] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 2 or self.weights.shape[1] != self.J + 1:
            raise DataError(f"weights shape {self.weights.shape} inconsistent with J={self.J}")
        if np.any(np.isnan(self.weights)) or np.any(self.weights == np.inf):
            raise DataError("weights must be finite or -inf")
        if self.T < 0:
            raise DataError("fewer weight rows than real tracklets")
        for i, mem in enumerate(self.membership):
            if not mem or min(mem) < 0 or max(mem) >= self.T:
                raise DataError(f"row {i} has invalid interval membership {mem}")
        if not self.tracklet_ids:
            self.tracklet_ids = list(range(self.I))

    @property
    def I(self) -> int:
        return len(self.membership)

    @property
    def T(self) -> int:
        return self.weights.shape[0] - self.I

    def hidden_row(self, t: int) -> int:
        return self.I + t

    def active_rows(self) -> list[list[int]]:
        act: list[list[int]] = [[] for _ in range(self.T)]
        for i, mem in enumerate(self.membership):
            for t in mem:
                act[t].append(i)
        return act

    @property
    def forbidden(self) -> np.ndarray:
        return self.weights == NEG_INF


def build_problem(tracklets: Sequence[Tracklet], intervals: Sequence[Interval],
                  scorer: Scorer) -> IdentificationProblem:
    J = scorer.J
    I, T = len(tracklets), len(intervals)
    W = np.empty((I + T, J + 1))
    index = {t.id: k for k, t in enumerate(tracklets)}
    membership: list[list[int]] = [[] for _ in range(I)]
    for iv in intervals:
        for tid in iv.active:
            membership[index[tid]].append(iv.index)
    for k, t in enumerate(tracklets):
        W[k] = scorer.tracklet_weights(t)
    for iv in intervals:
        W[I + iv.index, :J] = scorer.hidden_interval_weights(iv.start, iv.end)
        W[I + iv.index, J] = NEG_INF
    return IdentificationProblem(W, [tuple(sorted(m)) for m in membership], J,
                                 [t.id for t in tracklets], list(intervals))


# ------------------------------------------------------------------ solution


@dataclass(eq=False)
class Assignment:
    matrix: np.ndarray          # (I + T, J + 1) of 0/1
    columns: list[int]          # chosen column per real row
    objective: float
    diagnostics: dict = field(default_factory=dict)


def assignment_from_columns(p: IdentificationProblem, columns: Sequence[int]) -> np.ndarray:
    """Complete a real-row choice into the full matrix; hidden rows fill uncovered pairs."""
    a = np.zeros((p.I + p.T, p.J + 1), dtype=np.int8)
    for i, c in enumerate(columns):
        a[i, c] = 1
    for t, rows in enumerate(p.active_rows()):
        for j in range(p.J):
            if not any(columns[i] == j for i in rows):
                a[p.I + t, j] = 1
    return a


def objective(p: IdentificationProblem, a: np.ndarray) -> float:
    return math.fsum(float(p.weights[i, j]) for i, j in zip(*np.nonzero(a)))


def validate_assignment(p: IdentificationProblem, a: np.ndarray) -> list[str]:
    """Exact post-hoc check of all constraint families; returns violation messages."""
    a = np.asarray(a)
    errs = []
    if a.shape != p.weights.shape:
        return [f"shape {a.shape} != {p.weights.shape}"]
    if not np.all((a == 0) | (a == 1)):
        errs.append("entries must be binary")
    for i in range(p.I):
        s = int(a[i].sum())
        if s != 1:
            errs.append(f"real tracklet row {i} sums to {s}, expected 1")
    for t, rows in enumerate(p.active_rows()):
        for j in range(p.J):
            s = int(sum(a[i, j] for i in rows) + a[p.I + t, j])
            if s != 1:
                errs.append(f"interval {t} identity {j} covered {s} times, expected 1")
    for t in range(p.T):
        if a[p.I + t, p.J] != 0:
            errs.append(f"hidden row of interval {t} assigned to the outlier")
    bad = np.argwhere((a == 1) & p.forbidden)
    for i, j in bad:
        errs.append(f"forbidden entry ({i}, {j}) selected")
    return errs


def _prechecks(p: IdentificationProblem) -> None:
    W = p.weights
    J = p.J
    for i in range(p.I):
        if not np.any(W[i] > NEG_INF):
            raise InfeasibleError("one column per real tracklet",
                                  f"tracklet {p.tracklet_ids[i]} has no admissible column")
    for t, rows in enumerate(p.active_rows()):
        for j in range(J):
            if W[p.I + t, j] == NEG_INF and not any(W[i, j] > NEG_INF for i in rows):
                raise InfeasibleError("one tracklet per identity per interval",
                                      f"identity {j} has no admissible tracklet in interval {t}")


def solve(p: IdentificationProblem, method: str = "dp") -> Assignment:
    """Exact maximiser of the total weight subject to all constraints.

    ``dp`` sweeps intervals in time order keeping one best partial solution per
    assignment of the tracklets spanning the current cut; ``bnb`` is a
    depth-first branch and bound over real rows. Both are exact.
    """
    _prechecks(p)
    if method == "dp":
        columns, value, diag = _solve_dp(p)
    elif method == "bnb":
        columns, value, diag = _solve_bnb(p)
    else:
        raise ValueError(f"unknown solver method {method!r}")
    a = assignment_from_columns(p, columns)
    errs = validate_assignment(p, a)
    if errs:
        raise AssertionError("solver produced an invalid assignment: " + "; ".join(errs[:5]))
    diag["method"] = method
    return Assignment(a, list(columns), objective(p, a), diag)


def _solve_dp(p: IdentificationProblem):
    W = p.weights.tolist()
    J, I, T = p.J, p.I, p.T
    active = p.active_rows()
    first = [mem[0] for mem in p.membership]
    last = [mem[-1] for mem in p.membership]
    starts: list[list[int]] = [[] for _ in range(T)]
    for i in range(I):
        starts[first[i]].append(i)
    allowed = [[j for j in range(J + 1) if W[i][j] > NEG_INF] for i in range(I)]

    # state: tuple of (row, column) for rows open across the cut, sorted by row
    layer: dict[tuple, float] = {(): 0.0}
    back: list[dict[tuple, tuple[tuple, tuple]]] = []
    expanded = 0
    widths = []
    for t in range(T):
        new_rows = starts[t]
        act = active[t]
        hidden_row = W[I + t]
        nxt: dict[tuple, float] = {}
        bp: dict[tuple, tuple[tuple, tuple]] = {}
        for state, val in layer.items():
            cols = dict(state)
            taken = {cols[i] for i in act if i in cols and cols[i] < J}
            choice: list[int] = []

            def rec(k: int, gain: float, used: set[int]):
                nonlocal expanded
                if k == len(new_rows):
                    expanded += 1
                    cover = 0.0
                    for j in range(J):
                        if j not in used:
                            h = hidden_row[j]
                            if h == NEG_INF:
                                return
                            cover += h
                    full = dict(cols)
                    full.update(zip(new_rows, choice))
                    key = tuple(sorted((i, c) for i, c in full.items() if last[i] > t))
                    total = val + gain + cover
                    if key not in nxt or total > nxt[key]:
                        nxt[key] = total
                        bp[key] = (state, tuple(zip(new_rows, choice)))
                    return
                i = new_rows[k]
                for j in allowed[i]:
                    if j < J and j in used:
                        continue
                    choice.append(j)
                    rec(k + 1, gain + W[i][j], used | {j} if j < J else used)
                    choice.pop()

            rec(0, 0.0, taken)
        if not nxt:
            raise InfeasibleError("one tracklet per identity per interval",
                                  f"no consistent assignment reaches interval {t}")
        back.append(bp)
        widths.append(len(nxt))
        layer = nxt

    if T == 0:
        return [], 0.0, {"expanded": 0, "max_width": 0}
    # every row has closed by the final interval, so a single empty state remains
    (final_state, value), = layer.items()
    columns = [-1] * I
    state = final_state
    for t in range(T - 1, -1, -1):
        prev, picks = back[t][state]
        for i, c in picks:
            columns[i] = c
        state = prev
    diag = {"expanded": expanded, "max_width": max(widths), "intervals": T}
    log.debug("dp solve: %s", diag)
    return columns, value, diag


def _solve_bnb(p: IdentificationProblem):
    """Depth-first branch and bound over real rows.

    The objective is rewritten as a constant (all finite hidden weights) plus a
    per-row gain: choosing identity j for row i earns w_ij minus the hidden
    weights it displaces. The bound adds each unassigned row's best currently
    admissible gain, which ignores conflicts among unassigned rows and so never
    underestimates.
    """
    W = p.weights
    J, I, T = p.J, p.I, p.T
    active = p.active_rows()
    H = np.where(W[I:, :J] == NEG_INF, 0.0, W[I:, :J]) if T else np.zeros((0, J))
    required = [(t, j) for t in range(T) for j in range(J) if W[I + t, j] == NEG_INF]
    gain = np.full((I, J + 1), NEG_INF)
    for i, mem in enumerate(p.membership):
        for j in range(J + 1):
            if W[i, j] > NEG_INF:
                gain[i, j] = W[i, j] - (H[list(mem), j].sum() if j < J else 0.0)
    base = float(H.sum())
    order = [sorted(range(J + 1), key=lambda j, i=i: (-gain[i, j], j)) for i in range(I)]
    overlaps = [set() for _ in range(I)]
    for rows in active:
        for a in rows:
            overlaps[a].update(r for r in rows if r != a)

    cols = [-1] * I
    best = {"value": NEG_INF, "cols": None}
    nodes = 0

    def admissible(i: int, j: int) -> bool:
        if gain[i, j] == NEG_INF:
            return False
        return j == J or all(cols[o] != j for o in overlaps[i])

    def feasible_rest(k: int) -> bool:
        for t, j in required:
            rows = active[t]
            if any(cols[i] == j for i in rows):
                continue
            if not any(i >= k and admissible(i, j) for i in rows):
                return False
        return True

    def dfs(k: int, value: float):
        nonlocal nodes
        nodes += 1
        if k == I:
            if value > best["value"]:
                best["value"] = value
                best["cols"] = list(cols)
            return
        bound = value
        for i in range(k, I):
            m = max((gain[i, j] for j in range(J + 1) if admissible(i, j)), default=NEG_INF)
            if m == NEG_INF:
                return
            bound += m
        if bound <= best["value"]:
            return
        for j in order[k]:
            if not admissible(k, j):
                continue
            cols[k] = j
            if feasible_rest(k + 1):
                dfs(k + 1, value + gain[k, j])
            cols[k] = -1

    if feasible_rest(0):
        dfs(0, base)
    if best["cols"] is None:
        raise InfeasibleError("one tracklet per identity per interval",
                              "branch and bound found no feasible assignment")
    return best["cols"], best["value"], {"nodes": nodes}


# ------------------------------------------------------------------ output


def emit_identified(assignment: Assignment, p: IdentificationProblem,
                    tracklets: Sequence[Tracklet], span: tuple[int, int],
                    identities: Sequence[int]) -> dict[int, dict[int, BoundingBox]]:
    """Per frame, each identity's raw detection box or ``HIDDEN``."""
    out = {f: {ident: HIDDEN for ident in identities} for f in range(span[0], span[1] + 1)}
    by_id = {t.id: t for t in tracklets}
    for i, col in enumerate(assignment.columns):
        if col >= p.J:
            continue
        ident = identities[col]
        for d in by_id[p.tracklet_ids[i]].detections:
            slot = out[d.frame]
            if not slot[ident].hidden:
                raise AssertionError(f"identity {ident} given two boxes at frame {d.frame}")
            slot[ident] = d.box
    return out


def identify(tracklets: Sequence[Tracklet], scorer: Scorer, span: tuple[int, int] | None = None,
             method: str = "dp"):
    """Decompose, build, solve and emit in one call; returns (output, problem, assignment)."""
    span = span or scorer.trace.span
    intervals = decompose_intervals(tracklets, span)
    problem = build_problem(tracklets, intervals, scorer)
    sol = solve(problem, method)
    log.info("identified %d tracklets over %d intervals (objective %.3f)",
             problem.I, problem.T, sol.objective)
    return emit_identified(sol, problem, tracklets, span, scorer.trace.identities), problem, sol


def shift_changes_solution(p: IdentificationProblem, k: float) -> bool:
    """Whether subtracting ``k`` from every finite weight moves the optimum.

    The count of selected entries depends on how many pairs hidden rows cover,
    so a uniform shift is not guaranteed to preserve the argmax.
    """
    shifted = IdentificationProblem(np.where(p.forbidden, NEG_INF, p.weights - k),
                                    p.membership, p.J, p.tracklet_ids, p.intervals)
    a0 = solve(p).matrix
    a1 = solve(shifted).matrix
    return not np.array_equal(a0, a1) and not math.isclose(objective(p, a0), objective(p, a1))
