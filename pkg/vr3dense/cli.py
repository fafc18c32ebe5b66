"""
`vr3dense <subcommand> --config <path> [--flag value ...]`

Every run first prints the SHA-256 of the resolved config, then the seed
and the canonical config itself. Failures print a single
`vr3dense-error: <code>: <message>` line on stderr.
"""
import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .box_geometry import label_to_lidar_box, project_points, sparse_depth_map
from .config import Config, DensityMode, EdgeVariant, RunConfig, canonical_json, config_hash, load_run_config
from .depth_fit import ABLATION_VARIANTS, fit_depth_toy, run_ablation
from .depth_losses import StereoPair, loss_depth_sup, loss_depth_unsup
from .detection_codec import (
    Detection,
    decode_predictions,
    detections_to_label_lines,
    encode_targets,
    nms_bev,
    read_tensor,
    write_tensor,
)
from .detection_losses import loss_detection_total
from .errors import EvaluationError, ParameterError, Vr3denseError
from .evaluation import (
    depth_metrics,
    depth_samples_from_map,
    format_metrics_text,
    metrics_to_json,
    per_class_ap_frames,
)
from .gradcheck import CASES, run_suite
from .kitti_io import (
    parse_calib,
    read_depth_pgm,
    read_image,
    read_label_file,
    read_point_cloud,
    write_depth_pgm,
    write_image,
)
from .synthetic import make_stereo_scene
from .voxel_grid import normalize_density, voxelize, write_grid

logger = logging.getLogger(__name__)

console = Console(highlight=False, soft_wrap=True)


class UsageError(Exception):
    """Unknown subcommand or flag, or a missing argument."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


# ------------------------------------------------------------------ helpers

def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def _read_text(path: str) -> str:
    with open(path, "r") as f:
        return f.read()


def _write_output(path: str, data: bytes | str) -> None:
    """Write to a file, or to stdout when path is "-"."""
    if path == "-":
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data)
        else:
            sys.stdout.write(data)
        sys.stdout.flush()
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode) as f:
        f.write(data)
    logger.info(f"wrote {path}")


def _map_ordered(fn: Callable, items: Sequence, workers: int) -> list:
    """Apply fn to every item; results keep input order whatever the worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _outputs_for(inputs: Sequence[str], out: str, suffix: str) -> list[str]:
    """One input writes to `out`; several inputs write <stem><suffix> files into directory `out`."""
    if len(inputs) == 1:
        return [out]
    if out == "-":
        raise ParameterError("several inputs need an output directory, not stdout")
    return [str(Path(out) / (Path(p).stem + suffix)) for p in inputs]


def _report(mapping: dict, out: Optional[str], title: str) -> None:
    if out:
        text = format_metrics_text(mapping) if out.endswith(".txt") else metrics_to_json(mapping)
        _write_output(out, text)
    table = Table(title=title)
    table.add_column("metric")
    table.add_column("value", justify="right")
    for key, value in mapping.items():
        table.add_row(key, f"{value:.6f}" if isinstance(value, float) else str(value))
    if out != "-":
        console.print(table)


def _load_calib(path: str, cfg: RunConfig):
    return parse_calib(_read_text(path), default_baseline=cfg.default_baseline)


def _class_id(name: str, cfg: RunConfig) -> Optional[int]:
    return cfg.class_names.index(name) if name in cfg.class_names else None


# -------------------------------------------------------------- subcommands

def cmd_voxelize(args, cfg: RunConfig) -> int:
    outputs = _outputs_for(args.scan, args.out, ".vxg")

    def run(job):
        scan, out = job
        grid = normalize_density(voxelize(read_point_cloud(_read_bytes(scan)), cfg.roi), cfg.density_mode)
        _write_output(out, write_grid(grid))
        return scan, grid

    for scan, grid in _map_ordered(run, list(zip(args.scan, outputs)), args.workers):
        if args.out != "-":
            console.print(f"{scan}: {grid.occupied} occupied voxels, density sum {grid.total:.6f}")
    return 0


def cmd_project(args, cfg: RunConfig) -> int:
    calib = _load_calib(args.calib, cfg)
    if args.image:
        size = read_image(_read_bytes(args.image)).shape[:2]
    elif args.size:
        size = tuple(args.size)
    else:
        raise UsageError("project needs --image or --size H W")
    outputs = _outputs_for(args.scan, args.out, ".pgm")

    def run(job):
        scan, out = job
        projected = project_points(read_point_cloud(_read_bytes(scan)), calib, size)
        _write_output(out, write_depth_pgm(sparse_depth_map(projected, size)))
        return scan, len(projected)

    for scan, count in _map_ordered(run, list(zip(args.scan, outputs)), args.workers):
        if args.out != "-":
            console.print(f"{scan}: {count} projected points")
    return 0


def _labeled_boxes(path: str, calib, cfg: RunConfig, with_score: bool = False):
    boxes = []
    for label in read_label_file(_read_text(path), with_score):
        class_id = _class_id(label.class_name, cfg)
        if class_id is None:
            continue
        boxes.append((label_to_lidar_box(label, calib), class_id, label.score))
    return boxes


def cmd_encode_targets(args, cfg: RunConfig) -> int:
    calib = _load_calib(args.calib, cfg)
    boxes = [(box, c) for box, c, _ in _labeled_boxes(args.labels, calib, cfg)]
    tensor = encode_targets(boxes, cfg.roi, len(cfg.class_names), cfg.grid_cells)
    _write_output(args.out, write_tensor(tensor))
    if args.out != "-":
        console.print(f"encoded {int(tensor.occupied().sum())} of {len(boxes)} boxes into {args.out}")
    return 0


def cmd_decode(args, cfg: RunConfig) -> int:
    calib = _load_calib(args.calib, cfg)
    tensor = read_tensor(_read_bytes(args.pred))
    dets = nms_bev(decode_predictions(tensor, cfg.roi, cfg.conf_threshold), cfg.nms_iou)
    lines = detections_to_label_lines(dets, calib, cfg.class_names)
    _write_output(args.out, "".join(line + "\n" for line in lines))
    if args.out != "-":
        console.print(f"{len(dets)} detections after suppression")
    return 0


def cmd_losses(args, cfg: RunConfig) -> int:
    report: dict[str, float] = {}
    if args.pred or args.gt:
        if not (args.pred and args.gt):
            raise UsageError("detection losses need both --pred and --gt")
        det = loss_detection_total(read_tensor(_read_bytes(args.pred)), read_tensor(_read_bytes(args.gt)), cfg.det_weights)
        report.update(
            det_conf=det.conf,
            det_pose=det.pose,
            det_class=det.classification,
            det_giou=det.giou,
            det_total=det.total,
        )
    stereo = (args.left, args.right, args.calib, args.depth_l, args.depth_r)
    if any(stereo):
        if not all(stereo):
            raise UsageError("depth losses need --left, --right, --calib, --depth-l and --depth-r")
        calib = _load_calib(args.calib, cfg)
        pair = StereoPair(read_image(_read_bytes(args.left)), read_image(_read_bytes(args.right)), calib.focal, calib.baseline)
        depth_l = read_depth_pgm(_read_bytes(args.depth_l))
        depth_r = read_depth_pgm(_read_bytes(args.depth_r))
        weights = cfg.resolved_depth_weights()
        unsup = loss_depth_unsup(pair, depth_l, depth_r, weights=weights)
        report.update({f"depth_{k}": v for k, v in unsup.terms().items()})
        if args.sparse:
            samples = depth_samples_from_map(read_depth_pgm(_read_bytes(args.sparse)))
            report["depth_sup"] = loss_depth_sup(depth_l, samples, weights.lambda_sup, args.epoch, weights.sup_decay_rate)
    if not report:
        raise UsageError("losses needs detection tensors (--pred/--gt) and/or a stereo pair")
    _report(report, args.out, "Loss report")
    return 0


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    results = run_suite(seed=cfg.seed, n_inputs=args.inputs, probes=args.probes, names=args.case)
    table = Table(title="Gradient certification")
    table.add_column("case")
    table.add_column("inputs", justify="right")
    table.add_column("max rel error", justify="right")
    table.add_column("status")
    for r in results:
        table.add_row(r.name, str(r.n_inputs), f"{r.max_rel_error:.3e}", "pass" if r.passed else "FAIL")
    console.print(table)
    failed = [r.name for r in results if not r.passed]
    if failed:
        console.print(Panel(f"Failed: {', '.join(failed)}", title="Certification", style="bold red"))
        return 1
    console.print(Panel(f"All {len(results)} cases within tolerance", title="Certification", style="bold green"))
    return 0


def _detections_from_labels(path: str, calib, cfg: RunConfig) -> list[Detection]:
    dets = []
    for box, class_id, score in _labeled_boxes(path, calib, cfg, with_score=True):
        confidence = 1.0 if score is None else min(1.0, max(0.0, score))
        dets.append(Detection(box=box, confidence=confidence, class_id=class_id))
    return dets


def cmd_eval_detection(args, cfg: RunConfig) -> int:
    if len(args.det) != len(args.gt):
        raise UsageError(f"--det lists {len(args.det)} files but --gt lists {len(args.gt)}")
    calibs = args.calib if len(args.calib) == len(args.gt) else args.calib * len(args.gt)
    if len(args.calib) not in (1, len(args.gt)):
        raise UsageError("--calib takes one file or one per frame")

    def load(job):
        det_path, gt_path, calib_path = job
        calib = _load_calib(calib_path, cfg)
        dets = _detections_from_labels(det_path, calib, cfg)
        if args.nms:
            dets = nms_bev(dets, cfg.nms_iou)
        gts = [(box, c) for box, c, _ in _labeled_boxes(gt_path, calib, cfg)]
        return dets, gts

    frames = _map_ordered(load, list(zip(args.det, args.gt, calibs)), args.workers)
    report: dict[str, float] = {}
    for threshold in cfg.ap_iou_thresholds:
        curves = per_class_ap_frames(frames, threshold)
        for class_id, curve in curves.items():
            report[f"ap40_{cfg.class_names[class_id]}@{threshold:g}"] = curve.ap
        if curves:
            report[f"map40@{threshold:g}"] = float(np.mean([c.ap for c in curves.values()]))
    if not report:
        raise EvaluationError("no ground-truth boxes of a configured class")
    _report(report, args.out, "Detection AP (40 recall points)")
    return 0


def cmd_eval_depth(args, cfg: RunConfig) -> int:
    pred = read_depth_pgm(_read_bytes(args.pred))
    samples = depth_samples_from_map(read_depth_pgm(_read_bytes(args.gt)))
    metrics = depth_metrics(pred, samples, depth_range=cfg.depth_range)
    _report(metrics.as_dict(), args.out, "Depth metrics")
    return 0


def cmd_fit_depth(args, cfg: RunConfig) -> int:
    calib = _load_calib(args.calib, cfg)
    pair = StereoPair(read_image(_read_bytes(args.left)), read_image(_read_bytes(args.right)), calib.focal, calib.baseline)
    if args.init:
        init = read_depth_pgm(_read_bytes(args.init))
    else:
        init = np.full(pair.shape, args.init_depth)
    projected = depth_samples_from_map(read_depth_pgm(_read_bytes(args.sparse))) if args.sparse else None
    steps = args.steps or cfg.fit_steps
    result = fit_depth_toy(
        pair,
        init,
        weights=cfg.resolved_depth_weights(),
        steps=steps,
        lr=cfg.fit_lr,
        projected=projected,
    )
    _write_output(args.out, write_depth_pgm(result.depth))
    if args.trace:
        lines = ["step,loss\n"] + [f"{i},{v:.10e}\n" for i, v in enumerate(result.trace)]
        _write_output(args.trace, "".join(lines))
    if args.out != "-":
        console.print(f"loss {result.trace[0]:.6g} -> {result.trace[-1]:.6g} over {steps} steps ({result.accepted} accepted)")
    return 0


def cmd_ablate(args, cfg: RunConfig) -> int:
    scene = make_stereo_scene(seed=cfg.seed)
    rows = run_ablation(
        scene,
        base_weights=cfg.resolved_depth_weights(),
        steps=args.steps or cfg.fit_steps,
        lr=cfg.fit_lr,
        variants=tuple(args.variant or ABLATION_VARIANTS),
    )
    table = Table(title="Regularizer ablation (synthetic scene)")
    for column in ("variant", "abs_rel", "sq_rel", "rmse", "rmse_log", "delta1"):
        table.add_column(column, justify="right" if column != "variant" else "left")
    for row in rows:
        m = row.metrics
        table.add_row(row.variant, *(f"{v:.4f}" for v in (m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1)))
    if args.out:
        payload = {row.variant: {**row.metrics.as_dict(), "final_loss": row.final_loss} for row in rows}
        _write_output(args.out, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    if args.out != "-":
        console.print(table)
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    scene = make_stereo_scene(seed=cfg.seed)
    out = Path(args.out_dir)
    files = {
        "left.ppm": write_image(scene.pair.left),
        "right.ppm": write_image(scene.pair.right),
        "depth.pgm": write_depth_pgm(scene.depth),
        "sparse.pgm": write_depth_pgm(sparse_depth_map(scene.sparse, scene.shape)),
        "calib.txt": scene.calib.to_text(),
    }
    for name, data in files.items():
        _write_output(str(out / name), data)
    console.print(f"wrote synthetic scene ({scene.shape[0]}x{scene.shape[1]}) to {out}")
    return 0


# ------------------------------------------------------------------- parser

def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="JSON run config (default: $VR3DENSE_CONFIG)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted config override")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--density-mode", choices=[m.value for m in DensityMode])
    parser.add_argument("--edge-variant", choices=[v.value for v in EdgeVariant])
    parser.add_argument("--nms-iou", type=float)
    parser.add_argument("--conf-threshold", type=float)
    parser.add_argument("--workers", type=int, default=Config.WORKERS)
    parser.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vr3dense", description="LiDAR detection and stereo depth kernels")
    parser.add_argument("--version", action="version", version=f"vr3dense {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("voxelize", help="scan(s) -> voxel grid file(s)")
    p.add_argument("--scan", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_voxelize)

    p = sub.add_parser("project", help="scan(s) + calib -> sparse depth PGM(s)")
    p.add_argument("--scan", nargs="+", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--image", help="image whose size sets the projection plane")
    p.add_argument("--size", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_project)

    p = sub.add_parser("encode-targets", help="labels + calib -> target tensor")
    p.add_argument("--labels", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_encode_targets)

    p = sub.add_parser("decode", help="prediction tensor -> KITTI label lines")
    p.add_argument("--pred", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_decode)

    p = sub.add_parser("losses", help="detection and/or depth loss report")
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--left")
    p.add_argument("--right")
    p.add_argument("--calib")
    p.add_argument("--depth-l")
    p.add_argument("--depth-r")
    p.add_argument("--sparse")
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_losses)

    p = sub.add_parser("gradcheck", help="certify analytic gradients")
    p.add_argument("--inputs", type=int, default=50)
    p.add_argument("--probes", type=int, default=8)
    p.add_argument("--case", action="append", choices=[name for name, _ in CASES])
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("eval-detection", help="detection label files + gt -> AP40 report")
    p.add_argument("--det", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--calib", nargs="+", required=True)
    p.add_argument("--nms", action="store_true", help="suppress duplicates before matching")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_eval_detection)

    p = sub.add_parser("eval-depth", help="predicted depth PGM + sparse gt PGM -> depth metrics")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_eval_depth)

    p = sub.add_parser("fit-depth", help="stereo pair -> optimized depth + loss trace")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--init")
    p.add_argument("--init-depth", type=float, default=10.0)
    p.add_argument("--sparse")
    p.add_argument("--steps", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.set_defaults(handler=cmd_fit_depth)

    p = sub.add_parser("ablate", help="regularizer ablation on the synthetic scene")
    p.add_argument("--variant", action="append", choices=list(ABLATION_VARIANTS))
    p.add_argument("--steps", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("synth", help="write the synthetic stereo scene")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_synth)

    for subparser in sub.choices.values():
        _common(subparser)
    return parser


def _overrides(args) -> dict:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects KEY=VALUE, got '{item}'")
        overrides[key.strip()] = value
    flags = {
        "seed": args.seed,
        "density_mode": args.density_mode,
        "edge_variant": args.edge_variant,
        "nms_iou": args.nms_iou,
        "conf_threshold": args.conf_threshold,
    }
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return overrides


def _setup_logging(verbose: bool) -> None:
    level = Config.LOG_LEVEL if isinstance(logging.getLevelName(Config.LOG_LEVEL), int) else "WARNING"
    if verbose and logging.getLevelName(level) > logging.INFO:
        level = "INFO"
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stderr)],
    )


def _fail(code: str, message: str, status: int) -> int:
    first_line = str(message).strip().splitlines()[0] if str(message).strip() else "unknown error"
    sys.stderr.write(f"vr3dense-error: {code}: {first_line}\n")
    sys.stderr.flush()
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        return _fail("usage", str(e), 2)
    _setup_logging(args.verbose)

    try:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        config_path = args.config or Config.get_default_config_path()
        cfg = load_run_config(Path(config_path) if config_path else None, _overrides(args))
        quiet = getattr(args, "out", None) == "-"
        echo = sys.stderr if quiet else sys.stdout
        echo.write(f"config-sha256 {config_hash(cfg)}\n")
        echo.write(f"seed {cfg.seed}\n")
        echo.write(f"config {canonical_json(cfg)}\n")
        echo.flush()
        return args.handler(args, cfg)
    except UsageError as e:
        return _fail("usage", str(e), 2)
    except Vr3denseError as e:
        return _fail(e.code, str(e), 1)
    except OSError as e:
        return _fail("io", f"{e.strerror or e}: {e.filename}" if e.filename else str(e), 1)


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
