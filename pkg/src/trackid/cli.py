"""Command-line front end.

    trackid simulate --out seg/ [--noiseless]
    trackid pipeline seg/ --out run/ [--method static_p]

Precedence: embedded defaults < ``--config`` YAML < command-line flags.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from . import pipeline as pl
from .config import METHODS, SOLVERS, RunConfig, dump_defaults
from .errors import DataError, DomainError, FitError, InfeasibleError, SchemaError
from .identifier import identify
from .io import (dump_json, read_annotations, read_detections, read_identified, read_trace,
                 read_tracklets, write_identified, write_tracklets)
from .simulator import ScenarioConfig
from .tracker import track
from .weights import Scorer, WeightModel

log = logging.getLogger("trackid")

EXIT_OK, EXIT_ERROR, EXIT_MISSING, EXIT_INFEASIBLE, EXIT_SCHEMA = 0, 1, 2, 3, 4


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--log-level", default="INFO")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _inputs(p: argparse.ArgumentParser, *names: str) -> None:
    for n in names:
        p.add_argument(f"--{n}", help=f"{n} file")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="trackid", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--dump-defaults", action="store_true", help="print the default config and exit")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic segment")
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--frames", type=int)
    p.add_argument("--agents", type=int)

    p = sub.add_parser("calibrate", parents=[common], help="fit the floor-to-image homography")
    _inputs(p, "calibration")

    p = sub.add_parser("fit", parents=[common], help="fit the weight model from annotations")
    _inputs(p, "annotations", "traces", "calibration", "homography")

    p = sub.add_parser("track", parents=[common], help="build tracklets from detections")
    _inputs(p, "detections", "traces")

    p = sub.add_parser("identify", parents=[common], help="assign identities")
    _inputs(p, "detections", "tracklets", "traces", "model")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--diagnostics", action="store_true", help="write solver statistics to solver.json")

    p = sub.add_parser("evaluate", parents=[common], help="score an identification against annotations")
    _inputs(p, "identified", "annotations", "detections")

    p = sub.add_parser("pipeline", parents=[common], help="fit, track, identify and evaluate")
    p.add_argument("segments", nargs="*", help="segment directories holding detections.csv, "
                                               "traces.csv and annotations.json")
    _inputs(p, "detections", "traces", "annotations", "model", "calibration")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--jobs", type=int, default=1)
    return ap


def _overrides(args) -> dict:
    o: dict = {}
    if getattr(args, "seed", None) is not None:
        o["seed"] = args.seed
    paths = {k: getattr(args, k) for k in ("detections", "traces", "annotations", "model",
                                           "calibration", "out") if getattr(args, k, None) is not None}
    if "out" in paths:
        paths["output"] = paths.pop("out")
    if paths:
        o["paths"] = paths
    ident = {k: getattr(args, k) for k in ("method", "solver") if getattr(args, k, None) is not None}
    if ident:
        o["identify"] = ident
    scen = {}
    if getattr(args, "frames", None) is not None:
        scen["frames"] = args.frames
    if getattr(args, "agents", None) is not None:
        scen["n_agents"] = args.agents
    if scen:
        o["scenario"] = scen
    return o


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.paths["output"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------------ commands


def cmd_simulate(cfg: RunConfig, args) -> int:
    if args.noiseless:
        base = ScenarioConfig.noiseless(seed=cfg.seed)
        keep = {k: v for k, v in cfg.scenario.items()
                if k in ("n_agents", "frames", "move_prob", "min_dwell", "image_width",
                         "image_height", "annotate_every")}
        cfg.scenario = {**{k: v for k, v in vars(base).items() if k != "seed"}, **keep}
    paths = pl.simulate(cfg, _out(cfg))
    log.info("wrote %s", ", ".join(sorted(p.name for p in paths.values())))
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, args) -> int:
    src = pl.require(cfg.paths["calibration"], "calibration")
    with pl.timed("calibrate"):
        h = pl.calibrate(src)
    out = _out(cfg)
    dump_json(out / "homography.json", pl.homography_to_dict(h))
    pl.write_manifest(out, "calibrate", cfg, {"calibration": src}, ["homography.json"])
    return EXIT_OK


def cmd_fit(cfg: RunConfig, args) -> int:
    inputs = {"annotations": pl.require(cfg.paths["annotations"], "annotations"),
              "traces": pl.require(cfg.paths["traces"], "traces")}
    h = None
    if args.homography:
        inputs["homography"] = pl.require(args.homography, "homography")
        h = pl.load_homography(inputs["homography"])
    elif cfg.paths["calibration"]:
        inputs["calibration"] = pl.require(cfg.paths["calibration"], "calibration")
        h = pl.calibrate(inputs["calibration"])
    with pl.timed("fit"):
        model = pl.fit_model(read_annotations(inputs["annotations"]), read_trace(inputs["traces"]), cfg, h)
    out = _out(cfg)
    model.save(out / "model.json")
    pl.write_manifest(out, "fit", cfg, inputs, ["model.json"])
    return EXIT_OK


def cmd_track(cfg: RunConfig, args) -> int:
    inputs = {"detections": pl.require(cfg.paths["detections"], "detections")}
    span = None
    if cfg.paths["traces"]:
        inputs["traces"] = pl.require(cfg.paths["traces"], "traces")
        span = read_trace(inputs["traces"]).span
    with pl.timed("track"):
        dets = pl.prepare_detections(read_detections(inputs["detections"]), cfg, span)
        tracklets = track(dets, pl.tracker_config(cfg), span)
    out = _out(cfg)
    write_tracklets(out / "tracklets.json", tracklets)
    pl.write_manifest(out, "track", cfg, inputs, ["tracklets.json"])
    return EXIT_OK


def cmd_identify(cfg: RunConfig, args) -> int:
    method = cfg.identify["method"]
    inputs = {"traces": pl.require(cfg.paths["traces"], "traces"),
              "model": pl.require(cfg.paths["model"], "model")}
    trace = read_trace(inputs["traces"])
    scorer = Scorer(WeightModel.load(inputs["model"]), trace)
    solver = None
    with pl.timed("identify"):
        if method == "ilp":
            if args.tracklets:
                inputs["tracklets"] = pl.require(args.tracklets, "tracklets")
                tracklets = read_tracklets(inputs["tracklets"])
            else:
                inputs["detections"] = pl.require(cfg.paths["detections"], "detections")
                dets = pl.prepare_detections(read_detections(inputs["detections"]), cfg, trace.span)
                tracklets = track(dets, pl.tracker_config(cfg), trace.span)
            identified, problem, sol = identify(tracklets, scorer, trace.span, cfg.identify["solver"])
            solver = {"objective": sol.objective, "tracklets": problem.I, "intervals": problem.T,
                      "identities": problem.J, "diagnostics": sol.diagnostics}
        else:
            inputs["detections"] = pl.require(cfg.paths["detections"], "detections")
            dets = pl.prepare_detections(read_detections(inputs["detections"]), cfg, trace.span)
            identified, _ = pl.run_identification(method, dets, scorer, cfg)
    out = _out(cfg)
    write_identified(out / "identified.json", identified)
    outputs = ["identified.json"]
    if args.diagnostics and solver is not None:
        dump_json(out / "solver.json", solver)
        outputs.append("solver.json")
    pl.write_manifest(out, "identify", cfg, inputs, outputs)
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    inputs = {"identified": pl.require(args.identified, "identified"),
              "annotations": pl.require(cfg.paths["annotations"], "annotations"),
              "detections": pl.require(cfg.paths["detections"], "detections")}
    identified = read_identified(inputs["identified"])
    if not identified:
        raise DataError("identified output holds no frames")
    identities = sorted({i for row in identified.values() for i in row})
    span = (min(identified), max(identified))
    dets = pl.prepare_detections(read_detections(inputs["detections"]), cfg, span)
    with pl.timed("evaluate"):
        report = pl.run_evaluation(read_annotations(inputs["annotations"]), identified, dets,
                                   identities, cfg, cfg.identify["method"])
    out = _out(cfg)
    outputs = pl.write_report(out, report)
    pl.write_manifest(out, "evaluate", cfg, inputs, outputs)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_pipeline(cfg: RunConfig, args) -> int:
    out = Path(cfg.paths["output"])
    if not args.segments:
        report = pl.run_segment(cfg, cfg.paths["detections"], cfg.paths["traces"],
                                cfg.paths["annotations"], out, cfg.paths["model"], cfg.paths["calibration"])
        sys.stdout.write(report.to_text())
        return EXIT_OK
    segs = [Path(s) for s in args.segments]
    names = [s.name or str(k) for k, s in enumerate(segs)]
    if len(set(names)) != len(names):
        raise DataError("segment directory names must be distinct")

    def one(seg: Path, name: str):
        dst = out if len(segs) == 1 else out / name
        return pl.run_segment(cfg, seg / "detections.csv", seg / "traces.csv", seg / "annotations.json",
                              dst, cfg.paths["model"], cfg.paths["calibration"])

    jobs = max(1, int(args.jobs))
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        reports = list(pool.map(one, segs, names))
    for name, r in zip(names, reports):
        sys.stdout.write(f"== {name}\n{r.to_text()}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "calibrate": cmd_calibrate, "fit": cmd_fit, "track": cmd_track,
            "identify": cmd_identify, "evaluate": cmd_evaluate, "pipeline": cmd_pipeline}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.dump_defaults:
        sys.stdout.write(dump_defaults())
        return EXIT_OK
    if not args.command:
        ap.print_help(sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    try:
        if args.config is not None:
            pl.require(args.config, "config")
        cfg = RunConfig.load(args.config, _overrides(args))
        return COMMANDS[args.command](cfg, args)
    except FileNotFoundError as e:
        log.error("%s", e)
        return EXIT_MISSING
    except InfeasibleError as e:
        log.error("infeasible identification problem: constraint %r violated (%s)", e.constraint, e.detail)
        return EXIT_INFEASIBLE
    except SchemaError as e:
        log.error("schema violation: %s", e)
        return EXIT_SCHEMA
    except (DataError, DomainError, FitError) as e:
        log.error("%s", e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
