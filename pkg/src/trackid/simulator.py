"""Synthetic segments with known ground truth.

Agents hop between antenna cells, emit boxes from a known emission model with a
slowly varying AR(1) offset (so consecutive boxes overlap), occlude each other,
and are observed through a lagged, sparsely sampled localisation trace plus a
noisy detector with clutter.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DomainError
from .geometry import BoundingBox, Homography, Point2
from .io import Annotation, write_annotations, write_calibration, write_detections, write_trace
from .tracker import Detection
from .weights.emission import EmissionModel
from .weights.grid import COLS, N_CELLS, ROWS, AntennaGrid, cell_at, cell_col, cell_row
from .weights.model import PickupTrace
from .weights.visibility import VisibilityState

CLEAR, TRUNCATED, HIDDEN_V = VisibilityState.CLEAR, VisibilityState.TRUNCATED, VisibilityState.HIDDEN


@dataclass(frozen=True)
class ScenarioConfig:
    n_agents: int = 3
    frames: int = 4500             # 3 minutes at 25 fps
    seed: int = 0
    # motion
    move_prob: float = 0.01        # per-frame chance of hopping to a 4-neighbour cell
    min_dwell: int = 5
    cohesion: float = 0.5          # chance a hop heads towards the nearest other agent
    exclusive_cells: bool = False
    # occlusion
    p_hide_shared: float = 0.6     # agents sharing a cell: one hidden w.p., else truncated
    p_truncate_behind: float = 0.3  # deeper agent directly behind another
    # box emission
    emission_scale: float = 1.0
    wobble_rho: float = 0.995
    # localisation sensor (~2 Hz upsampled to the frame rate)
    trace_lag: int = 6
    trace_period: int = 12
    trace_dropout: float = 0.05
    trace_misread: float = 0.05    # a sample reports a random adjacent antenna
    # detector
    clutter_rate: float = 0.02
    clutter_duration: int = 10
    jitter_xy: float = 0.5
    jitter_wh: float = 0.5
    miss_rate: float = 0.02
    image_width: int = 1280
    image_height: int = 720
    annotate_every: int = 1

    def __post_init__(self):
        probs = ("move_prob", "cohesion", "p_hide_shared", "p_truncate_behind", "trace_dropout",
                 "trace_misread", "clutter_rate", "miss_rate")
        for name in probs:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")
        if self.frames < 1 or self.n_agents < 1:
            raise DomainError("frames and n_agents must be positive")
        if self.exclusive_cells and self.n_agents > N_CELLS:
            raise DomainError("more agents than cells with exclusive_cells")
        if not 0.0 <= self.wobble_rho < 1.0:
            raise DomainError("wobble_rho must lie in [0, 1)")
        if self.trace_period < 1 or self.trace_lag < 0 or self.annotate_every < 1:
            raise DomainError("trace_period and annotate_every must be >= 1, trace_lag >= 0")

    @classmethod
    def noiseless(cls, **overrides) -> "ScenarioConfig":
        """No sensor/detector noise, no occlusion, no clutter; agents never share a cell."""
        base = dict(exclusive_cells=True, cohesion=0.0, p_hide_shared=0.0, p_truncate_behind=0.0,
                    emission_scale=0.0, trace_lag=0, trace_period=1, trace_dropout=0.0, trace_misread=0.0,
                    clutter_rate=0.0, jitter_xy=0.0, jitter_wh=0.0, miss_rate=0.0)
        base.update(overrides)
        return cls(**base)

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


def default_homography() -> Homography:
    """Side-view perspective: deeper rows project higher and smaller."""
    f, depth0, cam_x, cam_h, u0, v0 = 900.0, 400.0, 240.0, 150.0, 640.0, 300.0
    return Homography(np.array([
        [f, u0, -f * cam_x + u0 * depth0],
        [0.0, v0, f * cam_h + v0 * depth0],
        [0.0, 1.0, depth0],
    ]) / depth0)


def default_emission_model(grid: AntennaGrid | None = None) -> EmissionModel:
    clear = np.array([[120.0, 70.0], [105.0, 60.0], [90.0, 52.0]])
    trunc = clear * np.array([1.0, 0.5])
    sizes = np.stack([clear, trunc], axis=1)
    covs = []
    for r, s in enumerate((1.0, 0.85, 0.7)):
        sd = np.array([10.0, 6.0, 8.0, 5.0]) * s
        corr = np.eye(4)
        corr[2, 3] = corr[3, 2] = 0.4
        covs.append(corr * np.outer(sd, sd))
    return EmissionModel(default_homography(), sizes, np.array(covs), grid or AntennaGrid())


@dataclass(eq=False)
class SyntheticSegment:
    config: ScenarioConfig
    detections: list[Detection]
    sources: list[int]             # identity per detection, 0 for clutter
    trace: PickupTrace
    true_cells: np.ndarray         # (frames, J)
    annotations: list[Annotation]
    true_model: EmissionModel
    misses: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def identities(self) -> list[int]:
        return self.trace.identities

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "detections": out / "detections.csv",
            "traces": out / "traces.csv",
            "annotations": out / "annotations.json",
            "true_model": out / "true_model.json",
            "calibration": out / "calibration.csv",
        }
        write_detections(paths["detections"], self.detections)
        write_trace(paths["traces"], self.trace)
        write_annotations(paths["annotations"], self.annotations)
        doc = {"emission": self.true_model.to_dict(), "scenario": asdict(self.config),
               "misses": self.misses, "spurious": int(sum(1 for s in self.sources if s == 0))}
        paths["true_model"].write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        grid = self.true_model.grid
        ids = list(range(1, N_CELLS + 1))
        world = [grid.world(c) for c in ids]
        image = [Point2(*self.true_model.centroid(c)) for c in ids]
        write_calibration(paths["calibration"], ids, world, image)
        return paths


def _neighbours(cell: int) -> list[int]:
    r, c = cell_row(cell), cell_col(cell)
    out = []
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        if 0 <= r + dr < ROWS and 0 <= c + dc < COLS:
            out.append(cell_at(r + dr, c + dc))
    return out


def _grid_distance(a: int, b: int) -> int:
    return abs(cell_row(a) - cell_row(b)) + abs(cell_col(a) - cell_col(b))


def _occlusion(cells: list[int], rng, cfg: ScenarioConfig) -> list[VisibilityState]:
    vis = [CLEAR] * len(cells)
    groups: dict[int, list[int]] = {}
    for j, c in enumerate(cells):
        groups.setdefault(c, []).append(j)
    for c in sorted(groups):
        members = groups[c]
        if len(members) < 2:
            continue
        victim = members[int(rng.integers(len(members)))]
        vis[victim] = HIDDEN_V if rng.random() < cfg.p_hide_shared else TRUNCATED
    for j, c in enumerate(cells):
        if vis[j] != CLEAR:
            continue
        r, col = cell_row(c), cell_col(c)
        behind = any(cell_row(o) == r - 1 and cell_col(o) == col for o in cells)
        if behind and rng.random() < cfg.p_truncate_behind:
            vis[j] = TRUNCATED
    return vis


def generate(cfg: ScenarioConfig, model: EmissionModel | None = None) -> SyntheticSegment:
    rng = np.random.default_rng(cfg.seed)
    model = model or default_emission_model()
    J, F = cfg.n_agents, cfg.frames
    identities = list(range(1, J + 1))

    cells = []
    for _ in range(J):
        free = [c for c in range(1, N_CELLS + 1) if not (cfg.exclusive_cells and c in cells)]
        cells.append(free[int(rng.integers(len(free)))])
    dwell = [0] * J
    z = rng.standard_normal((J, 4))
    chols = [np.linalg.cholesky(c) for c in model.covariances]
    innov = math.sqrt(1.0 - cfg.wobble_rho ** 2)

    true_cells = np.zeros((F, J), dtype=int)
    detections: list[Detection] = []
    sources: list[int] = []
    annotations: list[Annotation] = []
    misses = 0
    clutter: list[list] = []  # [frames_left, box array]
    vis = [CLEAR] * J
    prev_config = None

    for f in range(F):
        # exclusive cells also bar same-frame handoffs, whose identical boxes no tracker can split
        held = set(cells)
        for j in range(J):
            # every stay, including the first and the last, lasts at least min_dwell frames
            if dwell[j] >= cfg.min_dwell and F - f >= cfg.min_dwell and rng.random() < cfg.move_prob:
                options = _neighbours(cells[j])
                others = [c for k, c in enumerate(cells) if k != j]
                if others and rng.random() < cfg.cohesion:
                    dest = min(options, key=lambda o: min(_grid_distance(o, c) for c in others))
                else:
                    dest = options[int(rng.integers(len(options)))]
                if not (cfg.exclusive_cells and (dest in cells or dest in held)):
                    cells[j] = dest
                    dwell[j] = 0
            dwell[j] += 1
        true_cells[f] = cells
        config = tuple(cells)
        if config != prev_config:
            vis = _occlusion(list(cells), rng, cfg)
            prev_config = config
        z = cfg.wobble_rho * z + innov * rng.standard_normal((J, 4))

        frame_dets: list[tuple[BoundingBox, float, int]] = []
        annotate = f % cfg.annotate_every == 0
        for j in range(J):
            if vis[j] == HIDDEN_V:
                if annotate:
                    annotations.append(Annotation(f, identities[j], None, HIDDEN_V))
                continue
            row = cell_row(cells[j])
            x = model.mean(cells[j], vis[j]) + cfg.emission_scale * (chols[row] @ z[j])
            x[2:] = np.maximum(x[2:], 2.0)
            gt = BoundingBox(*(float(v) for v in x))
            if annotate:
                shared = sum(1 for c in cells if c == cells[j]) > 1
                annotations.append(Annotation(f, identities[j], gt, vis[j],
                                              difficult=bool(shared and vis[j] == TRUNCATED)))
            if rng.random() < cfg.miss_rate:
                misses += 1
                continue
            if cfg.jitter_xy or cfg.jitter_wh:
                noise = rng.standard_normal(4) * [cfg.jitter_xy, cfg.jitter_xy, cfg.jitter_wh, cfg.jitter_wh]
                d = x + noise
                d[2:] = np.maximum(d[2:], 2.0)
                box = BoundingBox(*(float(v) for v in d))
            else:
                box = gt
            frame_dets.append((box, float(rng.uniform(0.5, 1.0)), identities[j]))

        if rng.random() < cfg.clutter_rate:
            cx = rng.uniform(0.1, 0.9) * cfg.image_width
            cy = rng.uniform(0.2, 0.9) * cfg.image_height
            w = max(10.0, rng.normal(100.0, 25.0))
            h = max(10.0, rng.normal(60.0, 15.0))
            clutter.append([max(1, cfg.clutter_duration), np.array([cx, cy, w, h])])
        alive = []
        for item in clutter:
            base = item[1]
            if cfg.jitter_xy or cfg.jitter_wh:
                base = base + rng.standard_normal(4) * [cfg.jitter_xy, cfg.jitter_xy, cfg.jitter_wh, cfg.jitter_wh]
                base[2:] = np.maximum(base[2:], 2.0)
            frame_dets.append((BoundingBox(*(float(v) for v in base)), float(rng.uniform(0.4, 1.0)), 0))
            item[0] -= 1
            if item[0] > 0:
                alive.append(item)
        clutter = alive

        for k in rng.permutation(len(frame_dets)):
            box, score, src = frame_dets[int(k)]
            detections.append(Detection(f, box, score))
            sources.append(src)

    trace_cells = np.zeros_like(true_cells)
    reading = true_cells[0].copy()
    for f in range(F):
        if f % cfg.trace_period == 0 and (f == 0 or rng.random() >= cfg.trace_dropout):
            reading = true_cells[max(0, f - cfg.trace_lag)].copy()
            for j in range(J):
                if rng.random() < cfg.trace_misread:
                    options = _neighbours(int(reading[j]))
                    reading[j] = options[int(rng.integers(len(options)))]
        trace_cells[f] = reading
    trace = PickupTrace(0, identities, trace_cells)
    return SyntheticSegment(cfg, detections, sources, trace, true_cells, annotations, model, misses)
