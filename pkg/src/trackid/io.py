"""Readers and writers for every on-disk format the pipeline exchanges.

Boxes are always serialised as ``[cx, cy, w, h]`` with centroid coordinates.
Floats are written with ``repr`` so values round-trip exactly.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DomainError, SchemaError
from .geometry import HIDDEN, BoundingBox, Point2
from .tracker import Detection, Tracklet
from .weights.model import PickupTrace
from .weights.visibility import VisibilityState

DETECTION_FIELDS = ["frame", "x", "y", "w", "h", "score"]
TRACE_FIELDS = ["frame", "identity", "antenna"]
CALIBRATION_FIELDS = ["point_id", "world_x_mm", "world_y_mm", "image_x_px", "image_y_px"]


@dataclass(frozen=True)
class Annotation:
    frame: int
    identity: int
    box: BoundingBox | None
    visibility: VisibilityState = VisibilityState.CLEAR
    difficult: bool = False
    exclude: bool = False


def _read_csv(path, fields: Sequence[str]) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != list(fields):
            raise SchemaError(f"{path}: expected header {','.join(fields)}, got {reader.fieldnames}")
        return list(reader)


def _write_csv(path, fields: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])


def _box(v, where: str) -> BoundingBox | None:
    if v is None:
        return None
    try:
        cx, cy, w, h = (float(x) for x in v)
        return BoundingBox(cx, cy, w, h)
    except (TypeError, ValueError, DomainError) as e:
        raise SchemaError(f"{where}: bad box {v!r} ({e})") from None


def _box_out(b: BoundingBox | None):
    return None if b is None or b.hidden else b.as_list()


# ------------------------------------------------------------------ detections


def read_detections(path) -> list[Detection]:
    out = []
    for k, r in enumerate(_read_csv(path, DETECTION_FIELDS)):
        try:
            out.append(Detection(int(r["frame"]),
                                 BoundingBox(float(r["x"]), float(r["y"]), float(r["w"]), float(r["h"])),
                                 float(r["score"])))
        except (TypeError, ValueError) as e:
            raise SchemaError(f"{path}: row {k + 2}: {e}") from None
    return out


def write_detections(path, detections: Iterable[Detection]) -> None:
    _write_csv(path, DETECTION_FIELDS,
               ([d.frame, d.box.cx, d.box.cy, d.box.w, d.box.h, float(d.score)] for d in detections))


# ------------------------------------------------------------------ traces


def read_trace(path) -> PickupTrace:
    rows = []
    for k, r in enumerate(_read_csv(path, TRACE_FIELDS)):
        try:
            rows.append((int(r["frame"]), int(r["identity"]), int(r["antenna"])))
        except (TypeError, ValueError) as e:
            raise SchemaError(f"{path}: row {k + 2}: {e}") from None
    try:
        return PickupTrace.from_records(rows)
    except (ValueError) as e:
        raise SchemaError(f"{path}: {e}") from None


def write_trace(path, trace: PickupTrace) -> None:
    _write_csv(path, TRACE_FIELDS, trace.records())


# ------------------------------------------------------------------ annotations


def read_annotations(path) -> list[Annotation]:
    data = _load_json(path)
    if not isinstance(data, list):
        raise SchemaError(f"{path}: annotations must be a JSON array")
    out = []
    for k, a in enumerate(data):
        where = f"{path}[{k}]"
        try:
            box = _box(a["box"], where)
            vis = VisibilityState.parse(a.get("visibility", "hidden" if box is None else "clear"))
            out.append(Annotation(int(a["frame"]), int(a["identity"]), box, vis,
                                  bool(a.get("difficult", False)), bool(a.get("exclude", False))))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SchemaError):
                raise
            raise SchemaError(f"{where}: {e}") from None
    return out


def write_annotations(path, annotations: Iterable[Annotation]) -> None:
    rows = [{"frame": a.frame, "identity": a.identity, "box": _box_out(a.box),
             "visibility": a.visibility.name.lower(), "difficult": a.difficult, "exclude": a.exclude}
            for a in annotations]
    _dump_json(path, rows)


# ------------------------------------------------------------------ tracklets


def write_tracklets(path, tracklets: Iterable[Tracklet]) -> None:
    rows = [{"id": t.id,
             "frames": [{"frame": d.frame, "box": d.box.as_list(), "score": d.score}
                        for d in t.detections]}
            for t in tracklets]
    _dump_json(path, rows)


def read_tracklets(path) -> list[Tracklet]:
    data = _load_json(path)
    if not isinstance(data, list):
        raise SchemaError(f"{path}: tracklets must be a JSON array")
    out = []
    for k, t in enumerate(data):
        where = f"{path}[{k}]"
        try:
            dets = [Detection(int(e["frame"]), _box(e["box"], where), float(e.get("score", 1.0)))
                    for e in t["frames"]]
            frames = [d.frame for d in dets]
            if not dets or any(b != a + 1 for a, b in zip(frames, frames[1:])):
                raise SchemaError(f"{where}: tracklet frames must be non-empty and contiguous")
            out.append(Tracklet(int(t["id"]), dets, None, False))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SchemaError):
                raise
            raise SchemaError(f"{where}: {e}") from None
    if len({t.id for t in out}) != len(out):
        raise SchemaError(f"{path}: duplicate tracklet ids")
    return out


# ------------------------------------------------------------------ identified


def write_identified(path, identified: Mapping[int, Mapping[int, BoundingBox]]) -> None:
    """JSON array of ``{frame, identities: {id: box or null}}``."""
    frames = [{"frame": f, "identities": {str(i): _box_out(b) for i, b in sorted(identified[f].items())}}
              for f in sorted(identified)]
    _dump_json(path, frames)


def read_identified(path) -> dict[int, dict[int, BoundingBox]]:
    data = _load_json(path)
    if isinstance(data, dict):
        # tolerate a wrapper object holding the array under "frames"
        data = data.get("frames")
    if not isinstance(data, list):
        raise SchemaError(f"{path}: identified output must hold a frames array")
    out = {}
    for k, e in enumerate(data):
        where = f"{path}[{k}]"
        try:
            out[int(e["frame"])] = {int(i): (_box(b, where) or HIDDEN)
                                    for i, b in e["identities"].items()}
        except (KeyError, TypeError, ValueError, AttributeError) as ex:
            if isinstance(ex, SchemaError):
                raise
            raise SchemaError(f"{where}: {ex}") from None
    return out


# ------------------------------------------------------------------ calibration


def read_calibration(path) -> tuple[list[int], list[Point2], list[Point2]]:
    ids, world, image = [], [], []
    for k, r in enumerate(_read_csv(path, CALIBRATION_FIELDS)):
        try:
            ids.append(int(r["point_id"]))
            world.append(Point2(float(r["world_x_mm"]), float(r["world_y_mm"])))
            image.append(Point2(float(r["image_x_px"]), float(r["image_y_px"])))
        except (TypeError, ValueError) as e:
            raise SchemaError(f"{path}: row {k + 2}: {e}") from None
    return ids, world, image


def write_calibration(path, ids: Sequence[int], world: Sequence[Point2], image: Sequence[Point2]) -> None:
    _write_csv(path, CALIBRATION_FIELDS,
               ([i, float(w[0]), float(w[1]), float(m[0]), float(m[1])] for i, w, m in zip(ids, world, image)))


# ------------------------------------------------------------------ helpers


def _load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: invalid JSON ({e})") from None


def _dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def dump_json(path, obj) -> None:
    _dump_json(path, obj)
