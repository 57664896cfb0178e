"""Per-frame comparison methods: centroid distance and probabilistic weights."""
from __future__ import annotations

import math
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .geometry import HIDDEN, BoundingBox
from .matching import solve_min_cost
from .weights.emission import EmissionModel
from .weights.model import Scorer


class BaselineKind(str, Enum):
    STATIC_C = "static_c"
    STATIC_P = "static_p"


def static_c(detections: Sequence[BoundingBox], cells: Sequence[int], em: EmissionModel,
             cutoff: float | None = None) -> list[BoundingBox]:
    """Hungarian match on pixel distance between box centroids and projected antennas.

    Returns one box per identity (``HIDDEN`` when unmatched).
    """
    out = [HIDDEN] * len(cells)
    if not detections or not len(cells):
        return out
    tags = np.array([em.centroid(int(c)) for c in cells])
    cents = np.array([[d.cx, d.cy] for d in detections])
    dist = np.linalg.norm(tags[:, None, :] - cents[None, :, :], axis=2)
    if cutoff is not None:
        dist = np.where(dist > cutoff, np.inf, dist)
    for j, k in solve_min_cost(dist).pairs:
        out[j] = detections[k]
    return out


def static_p_matrix(real: np.ndarray, hidden: np.ndarray, outlier: np.ndarray) -> np.ndarray:
    """Augmented cost matrix for the per-frame probabilistic assignment.

    ``real`` is (J, D) identity-detection log weights, ``hidden`` (J,) the Hidden
    log weights and ``outlier`` (D,) the outlier log weights. Columns are the D
    detections then one private Hidden slot per identity. Costs are negated
    gains over sending the detection to the outlier, so the minimum-cost
    matching maximises the total log-probability of the frame.
    """
    J, D = real.shape
    cost = np.full((J, D + J), np.inf)
    with np.errstate(invalid="ignore"):
        gains = real - outlier[None, :]
    cost[:, :D] = np.where(np.isfinite(gains), -gains, np.inf)
    for j in range(J):
        if hidden[j] > -math.inf:
            cost[j, D + j] = -hidden[j]
    return cost


def static_p_frame(real: np.ndarray, hidden: np.ndarray, outlier: np.ndarray) -> list[int | None]:
    """Detection index per identity (None = Hidden) maximising the frame's log-probability."""
    J, D = real.shape
    out: list[int | None] = [None] * J
    for j, k in solve_min_cost(static_p_matrix(real, hidden, outlier)).pairs:
        if k < D:
            out[j] = k
    return out


def static_p(detections: Sequence[BoundingBox], frame: int, scorer: Scorer) -> list[BoundingBox]:
    J = scorer.J
    if not detections:
        return [HIDDEN] * J
    boxes = np.array([d.as_list() for d in detections])
    frames = np.full(len(boxes), frame)
    real = np.array([scorer.real_frame_weights(frames, boxes, j) for j in range(J)])
    hidden = np.array([scorer.hidden_frame_weights([frame], j)[0] for j in range(J)])
    outlier = scorer.outlier_frame_weights(boxes)
    picks = static_p_frame(real, hidden, outlier)
    return [HIDDEN if k is None else detections[k] for k in picks]


def run_baseline(kind: str | BaselineKind, detections: Mapping[int, Sequence[BoundingBox]],
                 scorer: Scorer, cutoff: float | None = None) -> dict[int, dict[int, BoundingBox]]:
    """Apply a baseline to every frame of the trace; same shape as the identifier output."""
    kind = BaselineKind(kind)
    trace = scorer.trace
    out = {}
    for f in trace.frames():
        dets = list(detections.get(f, []))
        if kind is BaselineKind.STATIC_C:
            boxes = static_c(dets, trace.cells[f - trace.first_frame], scorer.model.emission, cutoff)
        else:
            boxes = static_p(dets, f, scorer)
        out[f] = dict(zip(trace.identities, boxes))
    return out
