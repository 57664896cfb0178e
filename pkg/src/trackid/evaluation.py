"""Identification metrics: overall (per identity) and given detections (per box)."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, DomainError
from .geometry import BoundingBox, iou, iou_matrix
from .matching import solve_min_cost


@dataclass(frozen=True)
class IoUThresholds:
    normal: float = 0.5
    difficult: float = 0.3

    def __post_init__(self):
        if not 0 < self.difficult <= self.normal <= 1:
            raise DomainError("thresholds must satisfy 0 < difficult <= normal <= 1")

    def for_annotation(self, difficult: bool) -> float:
        return self.difficult if difficult else self.normal


@dataclass(frozen=True)
class GTAnnotation:
    box: BoundingBox
    visibility: int = 0
    difficult: bool = False


# frame -> identity -> annotation, or None when the identity is hidden
GroundTruth = Mapping[int, Mapping[int, "GTAnnotation | None"]]
# frame -> identity -> box (HIDDEN for null)
Identified = Mapping[int, Mapping[int, BoundingBox]]


def ground_truth_from_annotations(annotations: Iterable, identities: Sequence[int]) -> dict:
    """Group annotation records by frame; absent identities are hidden.

    Frames holding any ``exclude``-flagged record are dropped entirely.
    """
    frames: dict[int, dict[int, GTAnnotation | None]] = {}
    dropped: set[int] = set()
    for a in annotations:
        if getattr(a, "exclude", False):
            dropped.add(a.frame)
        slot = frames.setdefault(a.frame, {})
        if a.identity in slot and slot[a.identity] is not None:
            raise DataError(f"two annotations for identity {a.identity} at frame {a.frame}")
        if a.box is None or a.box.hidden:
            slot.setdefault(a.identity, None)
        else:
            slot[a.identity] = GTAnnotation(a.box, int(a.visibility), bool(a.difficult))
    out = {}
    for f in sorted(frames):
        if f in dropped:
            continue
        out[f] = {ident: frames[f].get(ident) for ident in identities}
    return out


def _rate(count: float, normaliser: int):
    return None if normaliser == 0 else count / normaliser


def _metric(count: int, normaliser: int) -> dict:
    return {"rate": _rate(count, normaliser), "count": int(count), "normaliser": int(normaliser)}


# ------------------------------------------------------------------ overall


def overall_metrics(gt: GroundTruth, pred: Identified,
                    th: IoUThresholds = IoUThresholds()) -> dict:
    correct = visible = hidden = fn = fp = 0
    iou_sum = 0.0
    for f, ann in gt.items():
        if f not in pred:
            raise DataError(f"prediction missing annotated frame {f}")
        row = pred[f]
        for ident, g in ann.items():
            if ident not in row:
                raise DataError(f"prediction missing identity {ident} at frame {f}")
            b = row[ident]
            has_box = b is not None and not b.hidden
            if g is None:
                hidden += 1
                if has_box:
                    fp += 1
                else:
                    correct += 1
            else:
                visible += 1
                if not has_box:
                    fn += 1
                    continue
                o = iou(b, g.box)
                iou_sum += o
                if o > th.for_annotation(g.difficult):
                    correct += 1
    total = visible + hidden
    return {
        "accuracy": _metric(correct, total),
        "iou": {"rate": _rate(iou_sum, visible), "sum": iou_sum, "normaliser": visible},
        "fnr": _metric(fn, visible),
        "fpr": _metric(fp, hidden),
    }


# ------------------------------------------------------------------ given detections


def oracle_assign(gt_frame: Mapping[int, "GTAnnotation | None"], detections: Sequence[BoundingBox],
                  th: IoUThresholds = IoUThresholds()) -> list:
    """Identity of each detection under the max-IoU ground-truth matching (None if unmatched)."""
    ids = [ident for ident, g in gt_frame.items() if g is not None]
    if not detections or not ids:
        return [None] * len(detections)
    gboxes = np.array([gt_frame[i].box.as_list() for i in ids])
    dboxes = np.array([d.as_list() for d in detections])
    ious = iou_matrix(dboxes, gboxes)
    thr = np.array([th.for_annotation(gt_frame[i].difficult) for i in ids])
    cost = np.where(ious >= thr[None, :], 1.0 - ious, np.inf)
    out = [None] * len(detections)
    for di, gi in solve_min_cost(cost).pairs:
        out[di] = ids[gi]
    return out


def detection_identities(pred_frame: Mapping[int, BoundingBox], detections: Sequence[BoundingBox]) -> list:
    """Identity the identifier gave each detection, recovered by exact box equality."""
    out: list = [None] * len(detections)
    for ident, b in sorted(pred_frame.items()):
        if b is None or b.hidden:
            continue
        for k, d in enumerate(detections):
            if out[k] is None and d == b:
                out[k] = ident
                break
    return out


def given_detections_metrics(oracle: Mapping[int, Sequence], ids: Mapping[int, Sequence]) -> dict:
    if set(oracle) != set(ids):
        raise DataError("oracle and identifier outputs cover different frames")
    per_frame = []
    correct = total = mis = fn = fp = oracle_pos = oracle_null = empty = 0
    for f in sorted(oracle):
        o, p = list(oracle[f]), list(ids[f])
        if len(o) != len(p):
            raise DataError(f"frame {f}: {len(o)} oracle entries vs {len(p)} identifier entries")
        if not o:
            empty += 1
            per_frame.append(1.0)
            continue
        ok = sum(1 for a, b in zip(o, p) if a == b)
        per_frame.append(ok / len(o))
        correct += ok
        total += len(o)
        for a, b in zip(o, p):
            if a is None:
                oracle_null += 1
                if b is not None:
                    fp += 1
            else:
                oracle_pos += 1
                if b is None:
                    fn += 1
                elif b != a:
                    mis += 1
    acc = _metric(correct, total)
    acc["pooled_rate"] = acc["rate"]
    acc["rate"] = float(np.mean(per_frame)) if per_frame else None
    acc["frames"] = len(per_frame)
    return {
        "accuracy": acc,
        "mis_id": _metric(mis, oracle_pos),
        "fnr": _metric(fn, oracle_pos),
        "fpr": _metric(fp, oracle_null),
        "errors": total - correct,
        "empty_frames": empty,
    }


# ------------------------------------------------------------------ report


@dataclass
class EvaluationReport:
    overall: dict
    given_detections: dict
    method: str = ""
    frames: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"method": self.method, "frames": self.frames, "overall": self.overall,
                "given_detections": self.given_detections, "notes": self.notes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"method: {self.method or '-'}    frames: {self.frames}", ""]
        lines.append(f"{'metric':<22}{'rate':>10}{'count':>10}{'normaliser':>12}")

        def row(name, m, count_key="count"):
            r = m.get("rate")
            c = m.get(count_key)
            cs = f"{c:.3f}" if isinstance(c, float) else str(c)
            lines.append(f"{name:<22}{('-' if r is None else f'{r:.3f}'):>10}{cs:>10}{m['normaliser']:>12}")

        o, g = self.overall, self.given_detections
        row("overall accuracy", o["accuracy"])
        row("overall IoU", o["iou"], "sum")
        row("overall FNR", o["fnr"])
        row("overall FPR", o["fpr"])
        row("GD accuracy", g["accuracy"])
        row("GD mis-ID", g["mis_id"])
        row("GD FNR", g["fnr"])
        row("GD FPR", g["fpr"])
        for n in self.notes:
            lines.append(f"note: {n}")
        return "\n".join(lines) + "\n"


def evaluate(gt: GroundTruth, pred: Identified, detections: Mapping[int, Sequence[BoundingBox]],
             th: IoUThresholds = IoUThresholds(), method: str = "") -> EvaluationReport:
    """Both metric families over the annotated frames."""
    overall = overall_metrics(gt, pred, th)
    oracle, ids = {}, {}
    for f, ann in gt.items():
        dets = list(detections.get(f, []))
        oracle[f] = oracle_assign(ann, dets, th)
        ids[f] = detection_identities(pred[f], dets)
    gd = given_detections_metrics(oracle, ids)
    notes = []
    if gd["empty_frames"]:
        notes.append(f"{gd['empty_frames']} frame(s) without detections scored as fully correct")
    if overall["iou"]["rate"] is None:
        notes.append("no visible identities: overall IoU undefined")
    return EvaluationReport(overall, gd, method, len(gt), notes)
