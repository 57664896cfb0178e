"""Tracklet/identity affinities: per-frame log-probabilities summed over lifetimes."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import DataError, DomainError, SchemaError
from ..geometry import BoundingBox
from .emission import (EmissionModel, EmissionSample, OutlierModel, bb_log_density, fit_emission,
                       fit_outlier)
from .grid import N_CELLS, AntennaGrid, context_vector
from .visibility import VisibilityModel, VisibilityState, fit_visibility, visibility_from_dict

FORMAT_VERSION = 1


def logsumexp(a, axis: int = -1) -> np.ndarray:
    """Stable log(sum(exp(a))) that returns -inf when every term is -inf."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _log(p) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p)


# ------------------------------------------------------------------ scalar API


def per_frame_weight(b: BoundingBox, p: int, c: tuple[int, ...], vm: VisibilityModel,
                     em: EmissionModel) -> float:
    """log sum_v p(box | p, v) p(v | p, c)."""
    pv = vm.probabilities(p, c)
    terms = [bb_log_density(b, p, v, em) + float(_log(pv[int(v)])) for v in VisibilityState]
    return float(logsumexp(np.array(terms)))


def outlier_weight(b: BoundingBox, om: OutlierModel) -> float:
    if b.hidden:
        raise DomainError("a Hidden box cannot be scored under the outlier model")
    return float(om.log_density(b.as_array())[0])


# ------------------------------------------------------------------ traces


class PickupTrace:
    """Per-frame antenna pickups for every identity over a contiguous frame range."""

    def __init__(self, first_frame: int, identities: Sequence[int], cells: np.ndarray):
        cells = np.asarray(cells, dtype=int)
        if cells.ndim != 2 or cells.shape[1] != len(identities):
            raise DataError(f"cells shape {cells.shape} does not match {len(identities)} identities")
        if cells.size and (cells.min() < 1 or cells.max() > N_CELLS):
            raise DomainError("trace contains antenna ids outside 1..18")
        self.first_frame = int(first_frame)
        self.identities = list(identities)
        self.cells = cells
        self._contexts: dict[tuple[int, int], tuple[int, ...]] = {}

    @property
    def J(self) -> int:
        return len(self.identities)

    @property
    def last_frame(self) -> int:
        return self.first_frame + len(self.cells) - 1

    @property
    def span(self) -> tuple[int, int]:
        return (self.first_frame, self.last_frame)

    def frames(self) -> range:
        return range(self.first_frame, self.last_frame + 1)

    def index(self, frames) -> np.ndarray:
        idx = np.asarray(frames, dtype=int) - self.first_frame
        if idx.size and (idx.min() < 0 or idx.max() >= len(self.cells)):
            raise DataError(f"trace covers frames {self.span}, asked for frames outside it")
        return idx

    def cell(self, frame: int, j: int) -> int:
        return int(self.cells[self.index([frame])[0], j])

    def context(self, frame: int, j: int) -> tuple[int, ...]:
        key = (frame, j)
        ctx = self._contexts.get(key)
        if ctx is None:
            row = self.cells[self.index([frame])[0]]
            others = [int(c) for k, c in enumerate(row) if k != j]
            ctx = context_vector(int(row[j]), others)
            self._contexts[key] = ctx
        return ctx

    @classmethod
    def from_records(cls, records: Iterable[tuple[int, int, int]]) -> "PickupTrace":
        """Build from (frame, identity, antenna) rows; every identity needs every frame."""
        by_frame: dict[int, dict[int, int]] = {}
        ids: set[int] = set()
        for frame, ident, ant in records:
            slot = by_frame.setdefault(int(frame), {})
            if int(ident) in slot:
                raise DataError(f"duplicate pickup for identity {ident} at frame {frame}")
            slot[int(ident)] = int(ant)
            ids.add(int(ident))
        if not by_frame:
            raise DataError("empty trace")
        identities = sorted(ids)
        first, last = min(by_frame), max(by_frame)
        cells = np.zeros((last - first + 1, len(identities)), dtype=int)
        for f in range(first, last + 1):
            slot = by_frame.get(f)
            if slot is None or len(slot) != len(identities):
                raise DataError(f"trace frame {f} is missing pickups")
            cells[f - first] = [slot[i] for i in identities]
        return cls(first, identities, cells)

    def records(self) -> list[tuple[int, int, int]]:
        return [(f, ident, int(self.cells[f - self.first_frame, j]))
                for f in self.frames() for j, ident in enumerate(self.identities)]


# ------------------------------------------------------------------ bundle


@dataclass(eq=False)
class WeightModel:
    visibility: VisibilityModel
    emission: EmissionModel
    outlier: OutlierModel

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_VERSION,
            "visibility": self.visibility.to_dict(),
            "emission": self.emission.to_dict(),
            "outlier": self.outlier.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeightModel":
        try:
            if d.get("format") != FORMAT_VERSION:
                raise SchemaError(f"unsupported model format {d.get('format')!r}")
            return cls(visibility_from_dict(d["visibility"]),
                       EmissionModel.from_dict(d["emission"]),
                       OutlierModel.from_dict(d["outlier"]))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SchemaError):
                raise
            raise SchemaError(f"malformed weight model: {e}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "WeightModel":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: {e}") from None
        return cls.from_dict(d)


class Scorer:
    """Vectorised weights for one (model, trace) pair.

    Visibility log-probabilities are tabulated once per frame and identity.
    """

    def __init__(self, model: WeightModel, trace: PickupTrace):
        self.model = model
        self.trace = trace
        n, J = trace.cells.shape
        probs = np.empty((n, J, 3))
        for k, f in enumerate(trace.frames()):
            for j in range(J):
                probs[k, j] = model.visibility.probabilities(int(trace.cells[k, j]), trace.context(f, j))
        self.log_vis = _log(probs)

    @property
    def J(self) -> int:
        return self.trace.J

    def real_frame_weights(self, frames, boxes: np.ndarray, j: int) -> np.ndarray:
        """Per-frame weights of real boxes (n, 4) against identity index j."""
        idx = self.trace.index(frames)
        boxes = np.atleast_2d(np.asarray(boxes, dtype=float))
        cells = self.trace.cells[idx, j]
        lv = self.log_vis[idx, j]
        em = self.model.emission
        terms = np.column_stack([
            em.log_density(boxes, cells, VisibilityState.CLEAR) + lv[:, 0],
            em.log_density(boxes, cells, VisibilityState.TRUNCATED) + lv[:, 1],
            np.full(len(boxes), -np.inf),  # Hidden emits no real box
        ])
        return logsumexp(terms, axis=1)

    def hidden_frame_weights(self, frames, j: int) -> np.ndarray:
        return self.log_vis[self.trace.index(frames), j, int(VisibilityState.HIDDEN)]

    def outlier_frame_weights(self, boxes: np.ndarray) -> np.ndarray:
        return self.model.outlier.log_density(boxes)

    def tracklet_weights(self, tracklet) -> np.ndarray:
        """Row of J identity weights followed by the outlier weight."""
        frames = tracklet.frames
        boxes = np.array([b.as_list() for b in tracklet.boxes])
        row = np.empty(self.J + 1)
        for j in range(self.J):
            row[j] = float(np.sum(self.real_frame_weights(frames, boxes, j)))
        row[self.J] = float(np.sum(self.outlier_frame_weights(boxes)))
        return row

    def hidden_interval_weights(self, start: int, end: int) -> np.ndarray:
        frames = np.arange(start, end + 1)
        return np.array([float(np.sum(self.hidden_frame_weights(frames, j))) for j in range(self.J)])


def tracklet_weight(t, j: int, trace: PickupTrace, vm: VisibilityModel, em: EmissionModel,
                    om: OutlierModel | None = None) -> float:
    """Sum of per-frame weights over the tracklet's lifetime.

    ``j`` indexes identities 0..J-1; ``j == J`` selects the outlier column (needs ``om``).
    """
    if j == trace.J:
        if om is None:
            raise DomainError("outlier column requested without an outlier model")
        return math.fsum(outlier_weight(d.box, om) for d in t.detections)
    trace.index(t.frames)
    return math.fsum(per_frame_weight(d.box, trace.cell(d.frame, j), trace.context(d.frame, j), vm, em)
                     for d in t.detections)


def hidden_tracklet_weight(start: int, end: int, j: int, trace: PickupTrace,
                           vm: VisibilityModel) -> float:
    """Sum over the interval of log p(Hidden | p_j, c_j)."""
    if end < start:
        raise DomainError("interval must contain at least one frame")
    trace.index([start, end])
    total = 0.0
    for f in range(start, end + 1):
        p = vm.probabilities(trace.cell(f, j), trace.context(f, j))[int(VisibilityState.HIDDEN)]
        if p <= 0:
            return -math.inf
        total += math.log(p)
    return total


# ------------------------------------------------------------------ fitting


def visibility_samples(annotations, trace: PickupTrace):
    """(cell, context, state) triples from annotations paired with the trace.

    Annotations with ``box`` None (or Hidden) count as Hidden observations.
    """
    col = {ident: j for j, ident in enumerate(trace.identities)}
    for a in annotations:
        if getattr(a, "exclude", False):
            continue
        if a.identity not in col:
            raise DataError(f"annotation identity {a.identity} absent from trace")
        j = col[a.identity]
        v = VisibilityState.HIDDEN if a.box is None or a.box.hidden else VisibilityState(a.visibility)
        yield trace.cell(a.frame, j), trace.context(a.frame, j), v


def emission_samples(annotations, trace: PickupTrace):
    col = {ident: j for j, ident in enumerate(trace.identities)}
    for a in annotations:
        if a.box is None or a.box.hidden:
            continue
        if a.identity not in col:
            raise DataError(f"annotation identity {a.identity} absent from trace")
        yield EmissionSample(a.box, trace.cell(a.frame, col[a.identity]),
                             VisibilityState(a.visibility), bool(getattr(a, "exclude", False)))


def fit_weight_model(annotations, trace: PickupTrace, image_size: tuple[float, float],
                     alpha: float = 1.0, key_by: str = "row", grid: AntennaGrid | None = None,
                     outlier_breadth: float = 0.5, ridge: float = 1e-6) -> WeightModel:
    annotations = list(annotations)
    vm = fit_visibility(visibility_samples(annotations, trace), alpha=alpha, key_by=key_by)
    em = fit_emission(emission_samples(annotations, trace), grid=grid, ridge=ridge)
    boxes = np.array([a.box.as_list() for a in annotations
                      if a.box is not None and not a.box.hidden])
    om = fit_outlier(boxes, image_size, breadth=outlier_breadth, ridge=ridge)
    return WeightModel(vm, em, om)
