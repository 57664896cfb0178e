"""Stage functions shared by the command line and the tests.

Each stage reads and writes the documented file formats, so stages compose
through files with no hidden state.
"""
from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .baselines import run_baseline
from .config import RunConfig
from .errors import DataError, SchemaError
from .evaluation import EvaluationReport, IoUThresholds, evaluate, ground_truth_from_annotations
from .geometry import BoundingBox, Homography, fit_homography
from .identifier import identify
from .io import (dump_json, read_annotations, read_calibration, read_detections, read_trace,
                 write_identified, write_tracklets)
from .simulator import generate
from .tracker import Detection, TrackerConfig, filter_detections, group_by_frame, track
from .weights import AntennaGrid, PickupTrace, Scorer, WeightModel, fit_weight_model

log = logging.getLogger("trackid")


@contextmanager
def timed(stage: str):
    t0 = time.perf_counter()
    yield
    log.info("stage %s took %.3f s", stage, time.perf_counter() - t0)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def require(path, what: str) -> Path:
    if path is None:
        raise FileNotFoundError(f"no {what} file given")
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} file not found: {p}")
    return p


def manifest_name(command: str) -> str:
    return "manifest.json" if command == "pipeline" else f"manifest.{command}.json"


def write_manifest(out_dir, command: str, cfg: RunConfig, inputs: Mapping[str, Path],
                   outputs: Sequence[str]) -> Path:
    """Config snapshot, input/output hashes and versions; no timestamps or absolute paths."""
    out_dir = Path(out_dir)
    doc = {
        "command": command,
        "config": cfg.snapshot(),
        "inputs": {k: {"name": Path(p).name, "sha256": sha256(p)} for k, p in sorted(inputs.items())},
        "outputs": {name: sha256(out_dir / name) for name in sorted(outputs)},
        "versions": {"trackid": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }
    path = out_dir / manifest_name(command)
    dump_json(path, doc)
    return path


# ------------------------------------------------------------------ stages


def tracker_config(cfg: RunConfig) -> TrackerConfig:
    t = cfg.tracker
    return TrackerConfig(iou_threshold=float(t["iou_threshold"]),
                         min_contiguous_length=int(t["min_contiguous_length"]))


def thresholds(cfg: RunConfig) -> IoUThresholds:
    return IoUThresholds(float(cfg.thresholds["iou"]), float(cfg.thresholds["iou_difficult"]))


def prepare_detections(detections: Sequence[Detection], cfg: RunConfig,
                       span: tuple[int, int] | None = None) -> list[Detection]:
    """Confidence floor and per-frame cap; frames outside ``span`` are dropped."""
    kept = filter_detections(detections, float(cfg.tracker["min_score"]), int(cfg.tracker["max_per_frame"]))
    if span is not None:
        inside = [d for d in kept if span[0] <= d.frame <= span[1]]
        if len(inside) != len(kept):
            log.warning("dropped %d detections outside the trace span %s", len(kept) - len(inside), span)
        kept = inside
    return kept


def calibrate(calibration_path) -> Homography:
    _, world, image = read_calibration(calibration_path)
    return fit_homography(world, image)


def homography_to_dict(h: Homography) -> dict:
    res = np.asarray(h.residuals, dtype=float)
    return {"homography": h.m.tolist(), "residuals_px": res.tolist(),
            "rms_px": float(np.sqrt(np.mean(res ** 2))) if res.size else 0.0}


def load_homography(path) -> Homography:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return Homography(np.array(d["homography"], dtype=float))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"{path}: bad homography file ({e})") from None


def fit_model(annotations, trace: PickupTrace, cfg: RunConfig,
              homography: Homography | None = None) -> WeightModel:
    w = cfg.weights
    model = fit_weight_model(annotations, trace, (float(w["image_width"]), float(w["image_height"])),
                             alpha=float(w["alpha"]), key_by=str(w["key_by"]), grid=AntennaGrid(),
                             outlier_breadth=float(w["outlier_breadth"]), ridge=float(w["ridge"]))
    if homography is not None:
        model.emission = replace(model.emission, homography=homography)
    return model


def run_identification(method: str, detections: Sequence[Detection], scorer: Scorer,
                       cfg: RunConfig) -> tuple[dict[int, dict[int, BoundingBox]], list]:
    """Identified boxes per frame; also returns the tracklets (empty for baselines)."""
    span = scorer.trace.span
    if method == "ilp":
        tracklets = track(detections, tracker_config(cfg), span)
        out, problem, sol = identify(tracklets, scorer, span, cfg.identify["solver"])
        log.info("solver %s explored %s", sol.diagnostics.get("method"),
                 {k: v for k, v in sorted(sol.diagnostics.items()) if k != "method"})
        return out, tracklets
    boxes = {f: [d.box for d in ds] for f, ds in group_by_frame(detections).items()}
    cutoff = cfg.identify.get("static_c_cutoff")
    return run_baseline(method, boxes, scorer, None if cutoff is None else float(cutoff)), []


def run_evaluation(annotations, identified, detections: Sequence[Detection], identities,
                   cfg: RunConfig, method: str = "") -> EvaluationReport:
    gt = ground_truth_from_annotations(annotations, identities)
    missing = [f for f in gt if f not in identified]
    if missing:
        raise DataError(f"{len(missing)} annotated frame(s) have no identification output "
                        f"(first {missing[0]})")
    boxes = {f: [d.box for d in ds] for f, ds in group_by_frame(detections).items()}
    return evaluate(gt, identified, boxes, thresholds(cfg), method)


def write_report(out_dir, report: EvaluationReport) -> list[str]:
    out_dir = Path(out_dir)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    return ["report.json", "report.txt"]


# ------------------------------------------------------------------ composites


def simulate(cfg: RunConfig, out_dir) -> dict[str, Path]:
    with timed("simulate"):
        seg = generate(cfg.scenario_config())
        paths = seg.write(out_dir)
    write_manifest(out_dir, "simulate", cfg, {}, [p.name for p in paths.values()])
    return paths


def run_segment(cfg: RunConfig, detections_path, traces_path, annotations_path, out_dir,
                model_path=None, calibration_path=None) -> EvaluationReport:
    """Full chain for one segment: fit (unless a model is given), track, identify, evaluate."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = {"detections": require(detections_path, "detections"),
              "traces": require(traces_path, "traces"),
              "annotations": require(annotations_path, "annotations")}
    outputs = []
    with timed("load"):
        trace = read_trace(inputs["traces"])
        annotations = read_annotations(inputs["annotations"])
        detections = prepare_detections(read_detections(inputs["detections"]), cfg, trace.span)
    with timed("fit"):
        if model_path is not None:
            inputs["model"] = require(model_path, "model")
            model = WeightModel.load(inputs["model"])
        else:
            h = None
            if calibration_path is not None:
                inputs["calibration"] = require(calibration_path, "calibration")
                h = calibrate(inputs["calibration"])
            model = fit_model(annotations, trace, cfg, h)
            model.save(out_dir / "model.json")
            outputs.append("model.json")
    method = cfg.identify["method"]
    with timed("identify"):
        scorer = Scorer(model, trace)
        identified, tracklets = run_identification(method, detections, scorer, cfg)
    if method == "ilp":
        write_tracklets(out_dir / "tracklets.json", tracklets)
        outputs.append("tracklets.json")
    write_identified(out_dir / "identified.json", identified)
    outputs.append("identified.json")
    with timed("evaluate"):
        report = run_evaluation(annotations, identified, detections, trace.identities, cfg, method)
    outputs += write_report(out_dir, report)
    write_manifest(out_dir, "pipeline", cfg, inputs, outputs)
    return report
