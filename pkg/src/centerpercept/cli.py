"""Command-line entry point: ``centerpercept <command> ...``.

Exit codes: 0 success, 1 tolerance failure (losscheck), 2 bad input files.
Any flag can also come from ``--config FILE.json`` (keys are flag names with
dashes or underscores); explicit flags win over the file. The worker count for
frame-level commands comes from ``CENTERPERCEPT_WORKERS`` (default 1).
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import annotations, decoder, encoder, losses, metrics, oracles, report, synth, viz
from .core import Frame, GridSpec, SceneTags, TargetBundle
from .tensorfile import TensorFormatError, read_tensor, write_tensor

log = logging.getLogger("centerpercept")

WORKERS_ENV = "CENTERPERCEPT_WORKERS"
TAG_HEADS = ("tag_weather", "tag_scene", "tag_timeofday")
INDEX_FILE = "index.json"


class InputError(Exception):
    pass


def _workers() -> int:
    try:
        return max(int(os.environ.get(WORKERS_ENV, "1")), 1)
    except ValueError:
        return 1


def _map_frames(fn, items):
    """Ordered map, in a process pool when more than one worker is configured."""
    n = _workers()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- encode


def _encode_one(job):
    frame, out_dir, stride, lane_sigma, min_iou, lane_pace = job
    grid = GridSpec(frame.width, frame.height, stride)
    bundle = encoder.encode_frame(
        frame.boxes, frame.lanes, grid,
        min_iou=min_iou, lane_sigma=lane_sigma, lane_pace=lane_pace, tags=frame.tags,
    )
    for head, arr in bundle.heads().items():
        write_tensor(os.path.join(out_dir, f"{frame.name}.{head}.tns"), arr)
    if frame.tags is not None:
        t = frame.tags
        for head, label, n in zip(TAG_HEADS, (t.weather, t.scene, t.time_of_day), (7, 7, 4)):
            onehot = np.zeros(n, dtype=np.float32)
            onehot[label] = 1.0
            write_tensor(os.path.join(out_dir, f"{frame.name}.{head}.tns"), onehot)
    return {"name": frame.name, "width": frame.width, "height": frame.height, "stride": stride}


def cmd_encode(args) -> int:
    frames = annotations.load_frames(args.ann)
    os.makedirs(args.out, exist_ok=True)
    for f in frames:
        GridSpec(f.width, f.height, args.stride)
    jobs = [(f, args.out, args.stride, args.lane_sigma, args.min_iou, args.lane_pace) for f in frames]
    index = _map_frames(_encode_one, jobs)
    with open(os.path.join(args.out, INDEX_FILE), "w") as fh:
        json.dump(index, fh, indent=1)
        fh.write("\n")
    log.info("encoded %d frames into %s", len(frames), args.out)
    return 0


# ---------------------------------------------------------------- decode


def _load_index(tensor_dir: str, stride: int) -> list[dict]:
    path = os.path.join(tensor_dir, INDEX_FILE)
    if os.path.exists(path):
        with open(path) as fh:
            return json.load(fh)
    # no index: discover frames from heatmap files and infer size from the grid
    entries = []
    for p in sorted(glob.glob(os.path.join(tensor_dir, "*.det_heatmaps.tns"))):
        name = os.path.basename(p)[: -len(".det_heatmaps.tns")]
        _, gh, gw = read_tensor(p).shape
        entries.append({"name": name, "width": gw * stride, "height": gh * stride, "stride": stride})
    if not entries:
        raise InputError(f"{tensor_dir}: no *.det_heatmaps.tns files found")
    return entries


def _decode_one(job):
    entry, tensor_dir, threshold, occl_threshold, cluster_dist, poly_degree = job
    name = entry["name"]
    grid = GridSpec(entry["width"], entry["height"], entry.get("stride", 4))

    def head(h):
        return read_tensor(os.path.join(tensor_dir, f"{name}.{h}.tns"))

    boxes = decoder.decode_boxes(
        head("det_heatmaps"), head("det_offsets"), head("occlusion"), grid, threshold, occl_threshold
    )
    lanes = decoder.decode_lanes(
        head("lane_heatmaps"), head("lane_offsets"), grid, threshold, cluster_dist, poly_degree
    )
    tags = None
    tag_paths = [os.path.join(tensor_dir, f"{name}.{h}.tns") for h in TAG_HEADS]
    if all(os.path.exists(p) for p in tag_paths):
        tags = SceneTags(*(int(np.argmax(read_tensor(p))) for p in tag_paths))
    return Frame(name, grid.input_w, grid.input_h, boxes, lanes.lanes, tags, lanes.polynomials)


def cmd_decode(args) -> int:
    entries = _load_index(args.tensors, args.stride)
    jobs = [
        (e, args.tensors, args.threshold, args.occl_threshold, args.cluster_dist, args.poly_degree)
        for e in entries
    ]
    frames = _map_frames(_decode_one, jobs)
    annotations.dump_frames(frames, args.out, with_scores=True)
    log.info("decoded %d frames into %s", len(frames), args.out)
    return 0


# ---------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    preds = annotations.load_frames(args.pred)
    gts = annotations.load_frames(args.gt)
    try:
        rep, acc = metrics.evaluate_frames(preds, gts, args.line_width)
    except ValueError as e:
        raise InputError(str(e)) from None
    with open(args.out, "w") as fh:
        json.dump(rep.to_dict(), fh, indent=1)
        fh.write("\n")
    if args.report_dir:
        report.write_report_dir(rep, acc, args.report_dir)
    d = rep.to_dict()
    for key in ("map50", "occl_accuracy", "lane_iou", "f1_weather", "f1_scene", "f1_tod"):
        value = d[key]
        print(f"{key},{'' if value is None else f'{value:.6f}'}")
    return 0


# ---------------------------------------------------------------- losscheck


def cmd_losscheck(args) -> int:
    rng = np.random.Generator(np.random.PCG64(args.seed))
    n = args.size
    target = rng.random((n, n))
    pred = rng.random((n, n))
    params = losses.HeatmapLossParams(args.alpha, args.beta, losses.count_peaks(target))
    analytic = losses.weighted_l2_grad(target, pred, params)
    numeric = oracles.central_difference(lambda p: losses.weighted_l2_loss(target, p, params), pred, args.h)
    # cells whose difference stencil crosses the max() switch are not differentiable there
    wt = (1 + target) ** params.alpha
    lo = (1 + pred - args.h) ** params.beta
    hi = (1 + pred + args.h) ** params.beta
    ok = ((wt >= lo) == (wt >= hi)) & (np.abs(wt - (1 + pred) ** params.beta) >= 1e-6)
    err = float(np.max(np.abs(analytic - numeric)[ok]) / max(np.max(np.abs(numeric[ok])), 1e-12))

    off_pred = rng.normal(size=(4, n, n))
    off_tgt = rng.normal(size=(4, n, n))
    mask = rng.random((n, n)) < 0.05
    logits = rng.normal(size=7)
    print(f"weighted_l2,{losses.weighted_l2_loss(target, pred, params):.9g}")
    print(f"offset_l1,{losses.offset_l1_loss(off_pred, off_tgt, mask):.9g}")
    print(f"cross_entropy,{losses.cross_entropy(logits, int(rng.integers(7))):.9g}")
    print(f"cells_checked,{int(ok.sum())}/{ok.size}")
    print(f"max_rel_grad_error,{err:.3e}")
    status = "pass" if err < args.tol else "FAIL"
    print(f"gradient_check,{status}")
    return 0 if err < args.tol else 1


# ---------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    cfg_dict = {}
    if args.scene_config:
        with open(args.scene_config) as fh:
            try:
                cfg_dict = json.load(fh)
            except json.JSONDecodeError as e:
                raise InputError(f"{args.scene_config}:{e.lineno}:{e.colno}: {e.msg}") from None
    n_frames = int(cfg_dict.pop("frames", args.frames))
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    try:
        cfg = synth.SceneConfig.from_dict(cfg_dict)
    except (TypeError, ValueError) as e:
        raise InputError(f"bad scene config: {e}") from None
    scenes = [synth.generate_scene(replace(cfg, seed=cfg.seed + i)) for i in range(n_frames)]
    annotations.dump_frames(scenes, args.out)
    log.info("wrote %d synthetic frames to %s", len(scenes), args.out)
    return 0


# ---------------------------------------------------------------- viz


def cmd_viz(args) -> int:
    frames = annotations.load_frames(args.ann)
    preds = {f.name: f for f in annotations.load_frames(args.pred)} if args.pred else {}
    os.makedirs(args.out, exist_ok=True)
    for frame in frames:
        heat = None
        if args.tensors:
            det = read_tensor(os.path.join(args.tensors, f"{frame.name}.det_heatmaps.tns"))
            lane = read_tensor(os.path.join(args.tensors, f"{frame.name}.lane_heatmaps.tns"))
            heat = np.concatenate([det, lane])
        else:
            grid = GridSpec(frame.width, frame.height, args.stride)
            b: TargetBundle = encoder.encode_frame(frame.boxes, frame.lanes, grid)
            heat = np.concatenate([b.det_heatmaps, b.lane_heatmaps])
        img = viz.render_overlay(frame, heat, args.stride, preds.get(frame.name))
        viz.write_ppm(os.path.join(args.out, f"{frame.name}.ppm"), img)
    log.info("wrote %d overlays to %s", len(frames), args.out)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="centerpercept", description=__doc__.split("\n")[0])
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("encode", help="annotations -> per-frame target tensors")
    e.add_argument("--ann", required=True, help="annotation JSON")
    e.add_argument("--out", required=True, help="output directory for .tns files")
    e.add_argument("--stride", type=int, default=4, help="output stride (default: 4)")
    e.add_argument("--lane-sigma", type=float, default=encoder.DEFAULT_LANE_SIGMA,
                   help="lane keypoint Gaussian sigma in cells (default: 2)")
    e.add_argument("--min-iou", type=float, default=encoder.DEFAULT_MIN_IOU,
                   help="IoU kept under corner jitter when sizing box Gaussians (default: 0.7, chosen)")
    e.add_argument("--lane-pace", type=float, default=encoder.DEFAULT_LANE_PACE,
                   help="lane resampling pace in pixels (default: 10, chosen)")
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help="tensors -> detections and lanes JSON")
    d.add_argument("--tensors", required=True, help="directory of .tns files")
    d.add_argument("--out", required=True, help="output predictions JSON")
    d.add_argument("--threshold", type=float, default=decoder.DEFAULT_THRESHOLD,
                   help="peak score threshold (default: 0.25)")
    d.add_argument("--cluster-dist", type=float, default=decoder.DEFAULT_CLUSTER_DIST,
                   help="Ward linkage cut-off in grid cells (default: 10, chosen)")
    d.add_argument("--poly-degree", type=int, default=decoder.DEFAULT_POLY_DEGREE,
                   help="lane polynomial degree, x = f(y) (default: 3, chosen)")
    d.add_argument("--occl-threshold", type=float, default=decoder.DEFAULT_OCCL_THRESHOLD,
                   help="occlusion probability cut (default: 0.5, chosen)")
    d.add_argument("--stride", type=int, default=4,
                   help="output stride when the directory has no index.json (default: 4)")
    d.set_defaults(func=cmd_decode)

    v = sub.add_parser("eval", help="score predictions against ground truth")
    v.add_argument("--pred", required=True)
    v.add_argument("--gt", required=True)
    v.add_argument("--out", required=True, help="EvalReport JSON")
    v.add_argument("--report-dir", help="also write CSV tables and PNG figures here")
    v.add_argument("--line-width", type=int, default=None,
                   help="lane mask stroke in px (default: 8 px per 1280 px of width, chosen)")
    v.set_defaults(func=cmd_eval)

    lc = sub.add_parser("losscheck", help="loss values and finite-difference gradient check")
    lc.add_argument("--seed", type=int, default=0)
    lc.add_argument("--size", type=int, default=32)
    lc.add_argument("--alpha", type=float, default=losses.DEFAULT_ALPHA, help="(default: 4)")
    lc.add_argument("--beta", type=float, default=losses.DEFAULT_BETA, help="(default: 2)")
    lc.add_argument("--h", type=float, default=1e-3, help="difference step (default: 1e-3)")
    lc.add_argument("--tol", type=float, default=1e-3, help="max relative error (default: 1e-3)")
    lc.set_defaults(func=cmd_losscheck)

    s = sub.add_parser("synth", help="write a synthetic annotation file")
    s.add_argument("--config", dest="scene_config", help="SceneConfig JSON (may include 'frames')")
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int, default=10)
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_synth)

    z = sub.add_parser("viz", help="PPM overlays of heatmaps, boxes and lanes")
    z.add_argument("--ann", required=True)
    z.add_argument("--pred")
    z.add_argument("--tensors", help="draw these heatmaps instead of the encoded targets")
    z.add_argument("--out", required=True)
    z.add_argument("--stride", type=int, default=4)
    z.set_defaults(func=cmd_viz)
    return p


def _config_path(argv: list[str], commands) -> str | None:
    """Value of a top-level --config, looking only before the subcommand name."""
    for i, tok in enumerate(argv):
        if tok in commands:
            return None
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _parse(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    subparsers = parser._subparsers._group_actions[0].choices
    path = _config_path(argv, subparsers)
    if path:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as e:
            raise InputError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
        if not isinstance(cfg, dict):
            raise InputError(f"{path}: config must be a JSON object")
        for sub in subparsers.values():
            known = {a.dest for a in sub._actions}
            defaults = {k.replace("-", "_"): v for k, v in cfg.items() if k.replace("-", "_") in known}
            sub.set_defaults(**defaults)
            for action in sub._actions:
                if action.dest in defaults:
                    action.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(message)s",
        )
        return args.func(args)
    except (annotations.SchemaError, TensorFormatError, InputError, synth.GenerationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e.filename}: file not found", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
