"""SORT-style tracklet builder adapted for offline identification.

Differences from online SORT: tracklets emit from birth, die on the first
missed frame, are filtered by contiguous length after the run, and report the
raw detection boxes rather than the Kalman estimate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, SequencingError
from .geometry import BoundingBox, iou_matrix
from .matching import solve_min_cost

log = logging.getLogger(__name__)

AREA_EPS = 1e-6


@dataclass(frozen=True)
class Detection:
    frame: int
    box: BoundingBox
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise DomainError(f"detection score must lie in [0, 1], got {self.score}")
        if self.box.hidden:
            raise DomainError("a detection cannot carry a Hidden box")


@dataclass(frozen=True)
class TrackerConfig:
    iou_threshold: float = 0.8
    min_contiguous_length: int = 2
    # SORT noise conventions; only the relative scales matter much here
    measurement_noise: tuple[float, ...] = (1.0, 1.0, 10.0, 10.0)
    process_noise: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4)
    initial_covariance: tuple[float, ...] = (10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4)

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise DomainError(f"iou_threshold must lie in (0, 1], got {self.iou_threshold}")
        if self.min_contiguous_length < 1:
            raise DomainError("min_contiguous_length must be >= 1")


# ------------------------------------------------------------------ Kalman

_F = np.eye(7)
_F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
_H = np.zeros((4, 7))
_H[0, 0] = _H[1, 1] = _H[2, 2] = _H[3, 3] = 1.0


@dataclass(frozen=True, eq=False)
class KalmanState:
    """State (cx, cy, area, aspect, v_cx, v_cy, v_area) with its covariance."""

    x: np.ndarray
    P: np.ndarray
    clamped: bool = False

    @classmethod
    def from_box(cls, box: BoundingBox, cfg: TrackerConfig = TrackerConfig()) -> "KalmanState":
        x = np.zeros(7)
        x[:4] = measurement(box)
        return cls(x, np.diag(np.asarray(cfg.initial_covariance, dtype=float)))

    def box(self) -> BoundingBox:
        s = max(self.x[2], AREA_EPS)
        r = max(self.x[3], AREA_EPS)
        w = np.sqrt(s * r)
        return BoundingBox(float(self.x[0]), float(self.x[1]), float(w), float(s / w))


def measurement(box: BoundingBox) -> np.ndarray:
    return np.array([box.cx, box.cy, box.w * box.h, box.w / box.h])


def predict(s: KalmanState, cfg: TrackerConfig = TrackerConfig()) -> KalmanState:
    x = _F @ s.x
    P = _F @ s.P @ _F.T + np.diag(np.asarray(cfg.process_noise, dtype=float))
    clamped = False
    if x[2] <= 0:
        x[2] = AREA_EPS
        x[6] = 0.0
        clamped = True
    return KalmanState(x, P, clamped)


def update(s: KalmanState, d: Detection | BoundingBox,
           cfg: TrackerConfig = TrackerConfig(), measurement_cov=None) -> KalmanState:
    box = d.box if isinstance(d, Detection) else d
    z = measurement(box)
    R = (np.diag(np.asarray(cfg.measurement_noise, dtype=float))
         if measurement_cov is None else np.asarray(measurement_cov, dtype=float))
    y = z - _H @ s.x
    S = _H @ s.P @ _H.T + R
    K = np.linalg.solve(S, _H @ s.P).T
    x = s.x + K @ y
    # Joseph form keeps P symmetric PSD
    ikh = np.eye(7) - K @ _H
    P = ikh @ s.P @ ikh.T + K @ R @ K.T
    P = (P + P.T) / 2.0
    if np.min(np.linalg.eigvalsh(P)) < -1e-9 * max(1.0, float(np.max(np.abs(P)))):
        raise ArithmeticError("Kalman covariance lost positive semi-definiteness")
    return KalmanState(x, P, s.clamped)


# ------------------------------------------------------------------ tracklets


@dataclass(eq=False)
class Tracklet:
    id: int
    detections: list[Detection]
    state: KalmanState | None = None
    alive: bool = True

    @property
    def start(self) -> int:
        return self.detections[0].frame

    @property
    def end(self) -> int:
        return self.detections[-1].frame

    @property
    def frames(self) -> list[int]:
        return [d.frame for d in self.detections]

    @property
    def boxes(self) -> list[BoundingBox]:
        return [d.box for d in self.detections]

    def __len__(self) -> int:
        return len(self.detections)

    def box_at(self, frame: int) -> BoundingBox:
        return self.detections[frame - self.start].box

    def longest_contiguous_run(self) -> int:
        best = run = 0
        prev = None
        for f in self.frames:
            run = run + 1 if prev is not None and f == prev + 1 else 1
            best = max(best, run)
            prev = f
        return best


@dataclass
class StepResult:
    updated: list[Tracklet] = field(default_factory=list)
    newborn: list[Tracklet] = field(default_factory=list)
    killed: list[Tracklet] = field(default_factory=list)


class Tracker:
    """Stateful fold over frames; call :meth:`step` once per consecutive frame."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.active: list[Tracklet] = []
        self.history: list[Tracklet] = []
        self._next_id = 0
        self._frame: int | None = None

    def step(self, frame: int, detections: Sequence[Detection]) -> StepResult:
        if self._frame is not None and frame != self._frame + 1:
            raise SequencingError(f"expected frame {self._frame + 1}, got {frame}")
        if any(d.frame != frame for d in detections):
            raise SequencingError(f"detections passed to frame {frame} carry other frame indices")
        self._frame = frame
        cfg = self.config
        for t in self.active:
            t.state = predict(t.state, cfg)

        res = StepResult()
        matched_dets: set[int] = set()
        matched_trk: set[int] = set()
        if self.active and detections:
            pred = np.array([t.state.box().as_list() for t in self.active])
            dets = np.array([d.box.as_list() for d in detections])
            ious = iou_matrix(pred, dets)
            cost = np.where(ious >= cfg.iou_threshold, 1.0 - ious, np.inf)
            for ti, di in solve_min_cost(cost).pairs:
                trk = self.active[ti]
                det = detections[di]
                trk.state = update(trk.state, det, cfg)
                trk.detections.append(det)
                matched_trk.add(ti)
                matched_dets.add(di)
                res.updated.append(trk)

        survivors = []
        for ti, trk in enumerate(self.active):
            if ti in matched_trk:
                survivors.append(trk)
            else:
                trk.alive = False
                res.killed.append(trk)
        for di, det in enumerate(detections):
            if di in matched_dets:
                continue
            trk = Tracklet(self._next_id, [det], KalmanState.from_box(det.box, cfg))
            self._next_id += 1
            survivors.append(trk)
            self.history.append(trk)
            res.newborn.append(trk)
        self.active = survivors
        return res

    def finalize(self) -> list[Tracklet]:
        for t in self.active:
            t.alive = False
        self.active = []
        return finalize(self.history, self.config)


def finalize(all_tracklets: Iterable[Tracklet], cfg: TrackerConfig = TrackerConfig()) -> list[Tracklet]:
    """Drop tracklets shorter than the contiguous-length cutoff."""
    kept = [t for t in all_tracklets if t.longest_contiguous_run() >= cfg.min_contiguous_length]
    return sorted(kept, key=lambda t: t.id)


def group_by_frame(detections: Iterable[Detection]) -> dict[int, list[Detection]]:
    out: dict[int, list[Detection]] = {}
    for d in detections:
        out.setdefault(d.frame, []).append(d)
    return out


def track(detections: Iterable[Detection], config: TrackerConfig | None = None,
          span: tuple[int, int] | None = None) -> list[Tracklet]:
    """Run the tracker over every frame in ``span`` (default: detection extent)."""
    by_frame = group_by_frame(detections)
    if span is None:
        if not by_frame:
            return []
        span = (min(by_frame), max(by_frame))
    tracker = Tracker(config)
    for f in range(span[0], span[1] + 1):
        tracker.step(f, by_frame.get(f, []))
    out = tracker.finalize()
    log.info("tracked %d tracklets (%d before length filter)", len(out), len(tracker.history))
    return out


def filter_detections(detections: Iterable[Detection], min_score: float = 0.4,
                      max_per_frame: int = 5,
                      exclusion: Sequence[BoundingBox] = (),
                      max_overlap_ratio: float = 0.4) -> list[Detection]:
    """Ingestion filters: confidence floor, per-frame cap, exclusion-region overlap."""
    out = []
    for frame, dets in sorted(group_by_frame(detections).items()):
        dets = [d for d in dets if d.score >= min_score]
        # stable: equal scores keep input order
        dets = sorted(dets, key=lambda d: -d.score)[:max_per_frame]
        for d in dets:
            if exclusion:
                region = np.array([r.as_list() for r in exclusion])
                inter = _intersection_areas(d.box, region)
                if np.max(inter) / d.box.area > max_overlap_ratio:
                    continue
            out.append(d)
    return out


def _intersection_areas(b: BoundingBox, regions: np.ndarray) -> np.ndarray:
    iw = np.minimum(b.x2, regions[:, 0] + regions[:, 2] / 2) - np.maximum(b.x1, regions[:, 0] - regions[:, 2] / 2)
    ih = np.minimum(b.y2, regions[:, 1] + regions[:, 3] / 2) - np.maximum(b.y1, regions[:, 1] - regions[:, 3] / 2)
    return np.clip(iw, 0, None) * np.clip(ih, 0, None)
