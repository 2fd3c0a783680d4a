"""``rainsd`` command line: rain, translate, pipeline, probe, fadain, eval, loss-check.

Exit status is 0 on success, 1 on operational errors and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, GlobalConfig, load_config
from .dataset import RainSettings, ingest_attributes, materialize, plan_splits
from .fadain import FadainConfig, fadain
from .image import load_image, save_image
from .losses import invariant_suite
from .metrics import (detection_metrics, load_mask_dir, pair_masks, read_detections,
                      segmentation_metrics)
from .network import NetworkConfig, TwoStreamNet, load_weights
from .probe import compare, format_table, load_feature_dir, probe, write_report
from .rain import resolve_spec
from .streaks import composite, dump_layer, generate_layer
from .tensor import read_tensor, write_tensor

log = logging.getLogger("rainsd")

U64_MAX = 2 ** 64 - 1


def u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed {v} is not a 64-bit unsigned integer")
    return v


def non_negative(text: str) -> float:
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def thread_count() -> int:
    raw = os.environ.get("RAINSD_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"RAINSD_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("RAINSD_THREADS must be >= 0")
    return n


def setup_logging(level: str, quiet: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("rainsd")
    root.handlers[:] = [handler]
    root.propagate = False
    root.setLevel(logging.WARNING if quiet else getattr(logging, level.upper()))


def write_report_file(args, payload: dict) -> None:
    if getattr(args, "report", None):
        Path(args.report).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def network_config(cfg: GlobalConfig, spatial, args) -> NetworkConfig:
    net = cfg.network
    return NetworkConfig(
        levels=args.levels if args.levels is not None else int(net.get("levels", 4)),
        base_channels=(args.base_channels if args.base_channels is not None
                       else int(net.get("base_channels", 8))),
        spatial_input=spatial,
        seed=int(net.get("seed", cfg.master_seed)),
    )


# --- subcommands ----------------------------------------------------------

def cmd_rain(args, cfg: GlobalConfig) -> int:
    model, geometry = cfg.rain_settings()
    img = load_image(args.inp)
    spec = resolve_spec(args.rate, geometry, (img.width, img.height), args.seed, model)
    layer = generate_layer(spec)
    save_image(composite(img, layer), args.out)
    if args.dump_layer:
        dump_layer(layer, args.dump_layer)
    log.info("%s: %d streaks at %g mm/h -> %s", args.inp, len(layer), args.rate, args.out)
    write_report_file(args, {"command": "rain", "streaks": len(layer), "rate": args.rate,
                             "seed": args.seed, "out": str(args.out)})
    return 0


def cmd_translate(args, cfg: GlobalConfig) -> int:
    content, style = load_image(args.content), load_image(args.style)
    if (content.width, content.height) != (style.width, style.height):
        raise ValueError(f"content is {content.width}x{content.height}, "
                         f"style is {style.width}x{style.height}")
    net_cfg = network_config(cfg, (content.height, content.width), args)
    params = load_weights(args.weights) if args.weights else None
    if params is None:
        log.info("no --weights given; using seeded initialization (network seed %d)", net_cfg.seed)
    out = TwoStreamNet(net_cfg, params).translate(content, style, args.seed)
    save_image(out, args.out)
    write_report_file(args, {"command": "translate", "out": str(args.out), "seed": args.seed})
    return 0


def cmd_pipeline(args, cfg: GlobalConfig) -> int:
    plan_dict = {}
    if args.plan:
        plan_dict = json.loads(Path(args.plan).read_text())
        if "pipeline" in plan_dict and isinstance(plan_dict["pipeline"], dict):
            plan_dict = plan_dict["pipeline"]
    try:
        plan = cfg.split_plan(**plan_dict)
    except ConfigError as exc:
        raise ConfigError(f"{args.plan}: {exc}") from None
    attrs = ingest_attributes(args.annotations, args.images, require_exists=not args.dry_run)
    manifest = plan_splits(attrs, plan)
    counts = {s: len(manifest.split(s)) for s in
              ("trainA", "trainB", "testA", "eval_clear", "eval_rainy")}
    log.info("planned %d entries: %s", len(manifest),
             ", ".join(f"{k}={v}" for k, v in counts.items() if v))
    if args.dry_run:
        print(json.dumps({"entries": len(manifest), "splits": counts}, sort_keys=True))
        write_report_file(args, {"command": "pipeline", "dry_run": True, "splits": counts})
        return 0
    model, geometry = cfg.rain_settings()
    params = load_weights(args.weights) if args.weights else None
    net_cfg = None
    if params is not None:
        # spatial size is replaced per image inside materialize
        levels = args.levels if args.levels is not None else int(cfg.network.get("levels", 4))
        net_cfg = network_config(cfg, (2 ** levels, 2 ** levels), args)
    report = materialize(manifest, args.out, RainSettings(model, geometry), params, net_cfg,
                         threads=thread_count())
    summary = report.to_dict()
    print(json.dumps({k: summary[k] for k in ("processed", "skipped", "failed")}, sort_keys=True))
    for f in report.failures:
        log.error("failed %s (source %s): %s", f["output_path"], f["source_path"], f["error"])
    write_report_file(args, {"command": "pipeline", **summary})
    return 1 if report.failed else 0


def cmd_probe(args, cfg: GlobalConfig) -> int:
    ids_a, feats_a = load_feature_dir(args.features)
    ids_b, feats_b = load_feature_dir(args.baseline)
    a, b = probe(feats_a, ids_a), probe(feats_b, ids_b)
    cmp = compare(a, b)
    paths = write_report(args.out, a, b, cmp)
    sys.stdout.write(format_table(a, b, cmp))
    if cmp.undefined:
        log.warning("baseline is zero for layer(s) %s; change undefined", cmp.undefined)
    write_report_file(args, {"command": "probe", "outputs": [str(p) for p in paths]})
    return 0


def cmd_fadain(args, cfg: GlobalConfig) -> int:
    out = fadain(read_tensor(args.content), read_tensor(args.style), FadainConfig(args.epsilon))
    write_tensor(out, args.out)
    write_report_file(args, {"command": "fadain", "shape": list(out.shape), "out": str(args.out)})
    return 0


def _fmt_pct(v) -> str:
    return "  n/a" if v is None or v != v else f"{v:6.1f}"


def cmd_eval(args, cfg: GlobalConfig) -> int:
    thr = args.iou_threshold if args.iou_threshold is not None else float(
        cfg.metrics.get("iou_threshold", 0.5))
    det = detection_metrics(read_detections(args.preds), read_detections(args.gts), thr)
    payload = {"command": "eval", "detection": {"recall": det.recall, "map": det.map,
                                                "iou_threshold": thr, "notes": det.notes}}
    lines = ["Task                      Metric        Value (%)",
             f"Traffic object detection  Recall        {_fmt_pct(det.recall)}",
             f"                          mAP@{thr:g}       {_fmt_pct(det.map)}"]
    for label, pred_dir, gt_dir, key in (
        ("Driving area seg.", args.masks_pred, args.masks_gt, "drivable"),
        ("Lane detection", args.lane_pred, args.lane_gt, "lane"),
    ):
        if (pred_dir is None) != (gt_dir is None):
            raise ValueError(f"{key} masks need both prediction and ground-truth directories")
        if pred_dir is None:
            continue
        preds, gts = pair_masks(load_mask_dir(pred_dir), load_mask_dir(gt_dir))
        n = args.classes or cfg.metrics.get("n_classes")
        if n is None:
            n = int(max(max(m.labels.max() for m in preds), max(m.labels.max() for m in gts))) + 1
            n = max(n, 2)
        seg = segmentation_metrics(preds, gts, int(n))
        payload[key] = {"miou": seg.miou, "accuracy": seg.accuracy, "classes": int(n)}
        lines.append(f"{label:<26}mIoU          {_fmt_pct(seg.miou)}")
        lines.append(f"{'':<26}Acc.          {_fmt_pct(seg.accuracy)}")
    print("\n".join(lines))
    for note in det.notes:
        log.warning(note)
    write_report_file(args, payload)
    return 0


def cmd_loss_check(args, cfg: GlobalConfig) -> int:
    results = invariant_suite(args.seed)
    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = [name for name, ok, _ in results if not ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    write_report_file(args, {"command": "loss-check", "seed": args.seed,
                             "results": [{"name": n, "pass": ok, "detail": d} for n, ok, d in results]})
    return 1 if failed else 0


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    common.add_argument("--report", help="write a JSON report of the run here")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rainsd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rainsd {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("rain", parents=[common], help="overlay rain streaks on an image")
    p.add_argument("--in", dest="inp", required=True, help="PNG or P6 PPM input")
    p.add_argument("--out", required=True, help="output image (.ppm for PPM, else PNG)")
    p.add_argument("--rate", type=non_negative, required=True, help="rainfall rate in mm/h")
    p.add_argument("--seed", type=u64, required=True)
    p.add_argument("--dump-layer", help="write streak segments as text")
    p.set_defaults(func=cmd_rain)

    p = sub.add_parser("translate", parents=[common], help="two-stream style translation")
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--weights", help="weight directory with manifest.json (default: seeded init)")
    p.add_argument("--seed", type=u64, required=True, help="seed for the input noise map")
    p.add_argument("--out", required=True)
    p.add_argument("--levels", type=int)
    p.add_argument("--base-channels", type=int)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("pipeline", parents=[common], help="plan and materialize dataset splits")
    p.add_argument("--annotations", required=True, help="BDD100K-style label JSON")
    p.add_argument("--images", required=True, help="directory holding the source images")
    p.add_argument("--out", required=True, help="output root")
    p.add_argument("--plan", help="JSON file with split-plan keys")
    p.add_argument("--weights", help="also translate trainB images with these weights")
    p.add_argument("--dry-run", action="store_true", help="plan only; print split counts")
    p.add_argument("--levels", type=int)
    p.add_argument("--base-channels", type=int)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("probe", parents=[common], help="per-layer style statistics report")
    p.add_argument("--features", required=True, help="directory of f<k>.rsdt files")
    p.add_argument("--baseline", required=True, help="baseline directory of f<k>.rsdt files")
    p.add_argument("--out", required=True, help="report path (.json/.csv written alongside)")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("fadain", parents=[common], help="apply FAdaIN to RSDT tensors")
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.set_defaults(func=cmd_fadain)

    p = sub.add_parser("eval", parents=[common], help="detection and segmentation metrics")
    p.add_argument("--preds", required=True, help="predicted detections (JSON lines)")
    p.add_argument("--gts", required=True, help="ground-truth detections (JSON lines)")
    p.add_argument("--masks-pred", help="predicted drivable-area label PNGs")
    p.add_argument("--masks-gt", help="ground-truth drivable-area label PNGs")
    p.add_argument("--lane-pred", help="predicted lane label PNGs")
    p.add_argument("--lane-gt", help="ground-truth lane label PNGs")
    p.add_argument("--classes", type=int, help="segmentation class count")
    p.add_argument("--iou-threshold", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loss-check", parents=[common], help="run the loss invariant suite")
    p.add_argument("--seed", type=u64, default=0)
    p.set_defaults(func=cmd_loss_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"rainsd: error: {exc}", file=sys.stderr)
        return 2
    setup_logging("debug" if args.verbose else cfg.log_level, args.quiet)
    try:
        return args.func(args, cfg)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        log.error("%s", msg)
        return 1


if __name__ == "__main__":
    sys.exit(main())
