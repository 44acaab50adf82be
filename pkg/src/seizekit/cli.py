"""Command-line entry point: ``seizekit <command> ...``.

Exit status is 0 on success, 2 for bad usage or unreadable input, and 3 when
an internal invariant fails (e.g. non-finite values inside the network).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .channel_detector import VARIANTS, ChannelModelSpec
from .core import WINDOW_LENGTHS, BundleError, PipelineConfig, load_bundle, read_detections_csv, store_bundle, write_detections_csv
from .eeg_detector import postprocess, segment_probabilities
from .gbt import GbtConfig
from .metrics import DEFAULT_THETAS, METRICS, MoesConfig, aggregate, pr_curve, score, write_pr_csv, write_pr_svg, write_report
from .nn.optim import TrainConfig
from .nn.tensor import NonFiniteError
from .synthgen import SynthConfig, generate
from .training import DESK_TRAIN, load_models, train_pipeline

log = logging.getLogger("seizekit")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 2, 3
MANIFEST = "run_manifest.json"
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class InputError(Exception):
    pass


def _configure_logging() -> None:
    name = os.environ.get("SEIZEKIT_LOG", "error").lower()
    if name not in LOG_LEVELS:
        raise InputError(f"SEIZEKIT_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _write_manifest(directory: Path, command: str, config: dict, inputs, outputs, seed, started: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "tool_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started_at": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_clock_s": round(time.time() - started, 3),
    }
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / MANIFEST, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _pipeline_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {}
    if getattr(args, "window", None) is not None:
        overrides["window_w"] = args.window
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    return replace(cfg, **overrides) if overrides else cfg


def _load_bundles(paths):
    bundles = [load_bundle(p) for p in paths]
    for p, (rec, _) in zip(paths, bundles):
        if rec.n_samples == 0:
            raise InputError(f"{p}: recording holds no samples")
    return bundles


# -- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    started = time.time()
    if not Path(args.config).is_file():
        raise InputError(f"synth config not found: {args.config}")
    cfg = SynthConfig.from_json(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    rec, ann = generate(cfg)
    out = Path(args.out)
    store_bundle(rec, ann, out)
    _write_manifest(out, "synth", cfg.to_dict(), [args.config], [out], cfg.seed, started)
    print(f"wrote {out} ({rec.n_channels} channels, {rec.duration:g} s, {len(ann)} seizures)")
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    pipe_cfg = _pipeline_config(args)
    spec = ChannelModelSpec(args.variant, pipe_cfg.window_w)
    if args.loss is not None and args.loss != spec.loss:
        raise InputError(f"variant {args.variant} trains with the {spec.loss} loss")
    train_cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
        loss=spec.loss,
    )
    corpus = _load_bundles(args.bundles)
    trained = train_pipeline(
        corpus, spec, train_cfg, pipe_cfg, n_segments=args.segments, gbt_config=GbtConfig(), grid_search=args.grid_search
    )
    out = Path(args.out)
    trained.save(out)
    h = trained.history
    config = {
        "variant": spec.variant,
        "window_w": spec.window_w,
        "segments": args.segments,
        "grid_search": args.grid_search,
        "train": {k: getattr(train_cfg, k) for k in ("learning_rate", "batch_size", "epochs", "patience", "loss")},
        "pipeline": pipe_cfg.to_dict(),
    }
    _write_manifest(out, "train", config, args.bundles, [out], args.seed, started)
    print(f"wrote {out}: best epoch {h.best_epoch}, validation BAC {h.best_val_bac:.4f}")
    return EXIT_OK


def cmd_detect(args) -> int:
    started = time.time()
    cfg = _pipeline_config(args)
    channel_model, segment_model = load_models(args.models)
    cfg = replace(cfg, window_w=channel_model.spec.window_w) if args.window is None else cfg
    (rec, _), = _load_bundles([args.bundle])
    t0 = time.perf_counter()
    events = postprocess(segment_probabilities(rec, channel_model, segment_model, cfg), cfg)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_detections_csv(events, out)
    _write_manifest(out.parent, "detect", cfg.to_dict(), [args.bundle, args.models], [out], None, started)
    print(f"{len(events)} detections in {elapsed:.2f} s -> {out}")
    return EXIT_OK


def _score_args(args) -> dict:
    return dict(window_w=args.window_w, ims_margin=args.ims_margin, moes=MoesConfig(args.min_fraction, args.min_overlap))


def cmd_evaluate(args) -> int:
    started = time.time()
    events = read_detections_csv(args.detections)
    rec, ann = load_bundle(args.bundle)
    result = score(args.metric, events, ann, duration_s=rec.duration, **_score_args(args))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report = write_report([result], out, [rec.id])
    _write_manifest(out.parent, "evaluate", {"metric": args.metric, "ims_margin": args.ims_margin}, [args.detections, args.bundle], [out], None, started)
    s = report["summary"]
    print(f"{args.metric}: TP {s['tp']:g} FN {s['fn']:g} FP {s['fp']:g} SEN {s['sensitivity']:.3f} PRE {s['precision']:.3f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    started = time.time()
    events = read_detections_csv(args.detections)
    rec, ann = load_bundle(args.bundle)
    rows = []
    for metric in METRICS:
        s = aggregate([score(metric, events, ann, duration_s=rec.duration, **_score_args(args))])
        rows.append({"metric": metric, **s.as_dict()})
    lines = [f"{'metric':<6} {'TP':>7} {'FN':>7} {'FP':>7} {'SEN':>6} {'PRE':>6} {'FPR/h':>7}"]
    for r in rows:
        lines.append(
            f"{r['metric']:<6} {r['tp']:>7.2f} {r['fn']:>7.2f} {r['fp']:>7.2f} "
            f"{r['sensitivity']:>6.3f} {r['precision']:>6.3f} {r['afpr_h']:>7.3f}"
        )
    print("\n".join(lines))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
        _write_manifest(out.parent, "compare-metrics", {"ims_margin": args.ims_margin}, [args.detections, args.bundle], [out], None, started)
    return EXIT_OK


def cmd_prcurve(args) -> int:
    started = time.time()
    cfg = _pipeline_config(args)
    channel_model, segment_model = load_models(args.models)
    cfg = replace(cfg, window_w=channel_model.spec.window_w) if args.window is None else cfg
    thetas = [float(t) for t in args.thetas.split(",")] if args.thetas else list(DEFAULT_THETAS)
    if any(not 0 <= t <= 1 for t in thetas):
        raise InputError("thresholds must lie in [0, 1]")
    runs = []
    for path in args.bundles:
        (rec, ann), = _load_bundles([path])
        runs.append((segment_probabilities(rec, channel_model, segment_model, cfg), ann, rec.duration))
    sargs = {**_score_args(args), "window_w": cfg.window_w}

    def score_at(theta):
        return [score(args.metric, postprocess(p, cfg, theta), ann, duration_s=d, **sargs) for p, ann, d in runs]

    points = pr_curve(score_at, thetas)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path, svg_path = prefix.with_suffix(".csv"), prefix.with_suffix(".svg")
    write_pr_csv(points, csv_path)
    write_pr_svg(points, svg_path, title=f"precision-recall ({args.metric})")
    config = {"metric": args.metric, "thetas": thetas, "pipeline": cfg.to_dict()}
    _write_manifest(prefix.parent, "prcurve", config, [*args.bundles, args.models], [csv_path, svg_path], None, started)
    print(f"{len(points)} points -> {csv_path}, {svg_path}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_pipeline_args(p) -> None:
    p.add_argument("--config", help="pipeline config JSON (PipelineConfig fields)")
    p.add_argument("--window", type=int, choices=WINDOW_LENGTHS, help="window length W in seconds")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker threads for channel inference")


def _add_score_args(p) -> None:
    p.add_argument("--ims-margin", type=float, default=30.0, help="IMS margin in seconds (default 30)")
    p.add_argument("--window-w", type=float, default=3.0, help="W used in detection offsets (default 3)")
    p.add_argument("--min-fraction", type=float, default=0.3, help="MOES minimum DOL/SOL (default 0.3)")
    p.add_argument("--min-overlap", type=float, default=10.0, help="MOES minimum overlap in seconds (default 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seizekit", description="Seizure detection on EEG recording bundles")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic recording bundle")
    p.add_argument("--config", required=True, help="synthgen JSON config")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the channel network and the segment classifier")
    p.add_argument("bundles", nargs="+", help="annotated training bundles")
    p.add_argument("--variant", choices=VARIANTS, default="CNN_BM")
    p.add_argument("--loss", choices=("SM", "BM"), help="must match the variant (checked)")
    p.add_argument("--segments", type=int, default=2000, help="channel windows sampled for training")
    p.add_argument("--epochs", type=int, default=DESK_TRAIN["epochs"])
    p.add_argument("--lr", type=float, default=DESK_TRAIN["learning_rate"])
    p.add_argument("--batch-size", type=int, default=DESK_TRAIN["batch_size"])
    p.add_argument("--patience", type=int, default=DESK_TRAIN["patience"])
    p.add_argument("--grid-search", action="store_true", help="pick GBT depth/rounds by 4-fold CV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model directory")
    _add_pipeline_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="detect seizures in one bundle")
    p.add_argument("bundle")
    p.add_argument("--models", required=True, help="directory written by 'train'")
    p.add_argument("--out", required=True, help="detections CSV")
    _add_pipeline_args(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score detections against a bundle's annotations")
    p.add_argument("detections")
    p.add_argument("bundle")
    p.add_argument("--metric", choices=METRICS, default="moes")
    p.add_argument("--out", required=True, help="report JSON")
    _add_score_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare-metrics", help="score with all four metrics and tabulate")
    p.add_argument("detections")
    p.add_argument("bundle")
    p.add_argument("--out", help="optional JSON table")
    _add_score_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("prcurve", help="precision-recall sweep over the detection threshold")
    p.add_argument("bundles", nargs="+")
    p.add_argument("--models", required=True)
    p.add_argument("--thetas", help="comma-separated thresholds (default 0.1,...,0.9)")
    p.add_argument("--metric", choices=METRICS, default="moes")
    p.add_argument("--out", required=True, help="output path prefix; .csv and .svg are written")
    _add_pipeline_args(p)
    _add_score_args(p)
    p.set_defaults(func=cmd_prcurve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _configure_logging()
        return args.func(args)
    except (InputError, BundleError, ValueError, FileNotFoundError, NotADirectoryError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NonFiniteError, FloatingPointError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
