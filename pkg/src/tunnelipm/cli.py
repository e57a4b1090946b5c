"""Command-line entry point: ``tunnelipm {calibrate,transform,synth,eval,report}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .dataset import (
    DatasetManifest,
    ImageRecord,
    SectionMap,
    clamp_bbox,
    dataset_report,
    load_manifest,
    save_manifest,
    section_map_for,
    split_train_test,
    transform_bbox,
)
from .errors import DegenerateCorrespondences, InvalidRoi, ManifestError, TunnelIPMError
from .geometry import Homography, apply_homography, invert_homography
from .metrics import evaluate_by_section, read_eval_csv
from .raster import ImageDecodeError, read_image, write_image
from .warp import Roi, WarpPlan, crop_and_mask, crop_rect, output_corners, plan_warp, warp_image

log = logging.getLogger("tunnelipm")

DEFAULT_SEED = 42
EXIT_ERROR = 1
EXIT_DEGENERATE_ROI = 2
EXIT_DECODE = 3


class CommandError(Exception):
    def __init__(self, message, code=EXIT_ERROR):
        super().__init__(message)
        self.code = code


class Outputs:
    """Tracks files a command writes and deletes them if the command fails."""

    def __init__(self):
        self.paths = []

    def path(self, p) -> Path:
        p = Path(p)
        p.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(p)
        return p

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for p in reversed(self.paths):
                if p.is_dir():
                    shutil.rmtree(p, ignore_errors=True)
                elif p.exists():
                    p.unlink()
        return False


def parse_size(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")
    if w < 2 or h < 2:
        raise argparse.ArgumentTypeError("output size must be at least 2x2")
    return w, h


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CommandError(f"{path}: no such file")
    except json.JSONDecodeError as exc:
        raise CommandError(f"{path}: invalid JSON ({exc})")


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def _load_manifest(path):
    if not Path(path).exists():
        raise CommandError(f"{path}: no such file")
    return load_manifest(path)


def load_calibration(path):
    """Return ``(roi, warp homography, out size, section map)`` from a calibration file."""
    data = _read_json(path)
    try:
        roi = Roi.from_dict(data["roi"])
        h = Homography(tuple(float(v) for v in data["homography"]))
        size = (int(data["out_width"]), int(data["out_height"]))
        m = SectionMap(
            Homography(tuple(float(v) for v in data["image_to_world"])),
            float(data["section_length_m"]),
            int(data["section_count"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CommandError(f"{path}: invalid calibration ({exc!r})")
    return roi, h, size, m


# --- calibrate -------------------------------------------------------------

def cmd_calibrate(args):
    cfg = _read_json(args.roi)
    try:
        roi = Roi.from_dict(cfg)
    except (DegenerateCorrespondences, InvalidRoi) as exc:
        raise CommandError(f"degenerate ROI in {args.roi}: {exc}", EXIT_DEGENERATE_ROI)
    except (KeyError, TypeError, ValueError) as exc:
        raise CommandError(f"{args.roi}: invalid ROI config ({exc!r})")
    size = args.out_size or (tuple(cfg["out_size"]) if "out_size" in cfg else (None, None))
    try:
        plan = plan_warp(roi, *size)
        m = SectionMap.from_roi(roi, args.section_length, args.sections)
    except DegenerateCorrespondences as exc:
        raise CommandError(f"degenerate ROI in {args.roi}: {exc}", EXIT_DEGENERATE_ROI)
    inverse = invert_homography(plan.h_src_to_dst)
    targets = output_corners(plan.out_width, plan.out_height)
    residuals = []
    print(f"{'corner':>10} {'warp residual px':>18} {'world residual m':>18}")
    for name, src, dst, world in zip(
        ("near-left", "near-right", "far-right", "far-left"), roi.corners, targets, roi.world_corners()
    ):
        px = apply_homography(plan.h_src_to_dst, src)
        wx = apply_homography(m.h_image_to_world, src)
        r_px = max(abs(px[0] - dst[0]), abs(px[1] - dst[1]))
        r_w = max(abs(wx[0] - world[0]), abs(wx[1] - world[1]))
        residuals.append({"corner": name, "warp_px": r_px, "world_m": r_w})
        print(f"{name:>10} {r_px:18.3e} {r_w:18.3e}")
    with Outputs() as out:
        _write_json(out.path(args.out), {
            "roi": roi.to_dict(),
            "out_width": plan.out_width,
            "out_height": plan.out_height,
            "homography": plan.h_src_to_dst.to_list(),
            "inverse": inverse.to_list(),
            "image_to_world": m.h_image_to_world.to_list(),
            "section_length_m": m.section_length_m,
            "section_count": m.section_count,
            "residuals": residuals,
            "meta": {"seed": args.seed, "version": __version__},
        })
    print(f"calibration written to {args.out} (warped size {plan.out_width}x{plan.out_height})")


# --- transform -------------------------------------------------------------

def _transform_case1(manifest, roi, fill, base, out, out_dir, labels_only):
    x0, y0, x1, y1 = _crop_bounds(roi, manifest)
    width, height = x1 - x0 + 1, y1 - y0 + 1
    images = []
    for im in manifest.images:
        if not labels_only:
            src = _read_frame(base, im)
            crop, offset = crop_and_mask(src, roi, fill)
            write_image(out.path(out_dir / "images" / f"{Path(im.file).stem}.png"), crop)
        images.append(ImageRecord(im.id, f"images/{Path(im.file).stem}.png", width, height))
    anns = []
    for a in manifest.annotations:
        b = clamp_bbox(a.bbox.shifted(-x0, -y0), width, height)
        if b is not None:
            anns.append(a.with_bbox(b))
    return images, anns, Homography.translation(-x0, -y0), roi.shifted(-x0, -y0)


def _crop_bounds(roi, manifest):
    if not manifest.images:
        raise CommandError("manifest has no images")
    return crop_rect(roi, *manifest.image_size)


def _transform_case2(manifest, roi, plan, base, out, out_dir, labels_only):
    size = width, height = plan.out_width, plan.out_height
    images = []
    for im in manifest.images:
        if not labels_only:
            warped = warp_image(_read_frame(base, im), plan)
            write_image(out.path(out_dir / "images" / f"{Path(im.file).stem}.png"), warped)
        images.append(ImageRecord(im.id, f"images/{Path(im.file).stem}.png", width, height))
    anns = []
    for a in manifest.annotations:
        b = transform_bbox(plan.h_src_to_dst, a.bbox, size)
        if b is not None:
            anns.append(a.with_bbox(b))
    warped_roi = Roi(output_corners(width, height), roi.road_width_m, roi.length_m)
    return images, anns, plan.h_src_to_dst, warped_roi


def _read_frame(base, im):
    path = base / im.file
    try:
        return read_image(path)
    except (ImageDecodeError, FileNotFoundError) as exc:
        raise CommandError(f"cannot decode image {path}: {exc}", EXIT_DECODE)


def cmd_transform(args):
    manifest = _load_manifest(args.manifest)
    roi, h, size, _ = load_calibration(args.calibration)
    if manifest.case != "original":
        log.warning("transforming a %s manifest; expected an original-frame manifest", manifest.case)
    if manifest.image_size is not None:
        src_w, src_h = manifest.image_size
        min_x, min_y, max_x, max_y = roi.bounds()
        if min_x < 0 or min_y < 0 or max_x > src_w - 1 or max_y > src_h - 1:
            raise CommandError(f"calibration ROI does not fit the {src_w}x{src_h} images of {args.manifest}")
    base = Path(args.manifest).resolve().parent
    out_dir = Path(args.out)
    with Outputs() as out:
        if args.case == 1:
            images, anns, hom, new_roi = _transform_case1(manifest, roi, args.fill, base, out, out_dir, args.labels_only)
        else:
            if args.out_size and tuple(args.out_size) != size:
                plan = plan_warp(roi, *args.out_size, fill=args.fill)
            else:
                plan = WarpPlan(h, size[0], size[1], args.fill)
            images, anns, hom, new_roi = _transform_case2(manifest, roi, plan, base, out, out_dir, args.labels_only)
        meta = dict(manifest.meta)
        meta.update({"seed": args.seed, "source_manifest": str(args.manifest)})
        result = DatasetManifest(f"case{args.case}", tuple(images), tuple(anns), hom, new_roi, meta)
        save_manifest(result, out.path(out_dir / "manifest.json"))
        summary = f"case {args.case}: {len(images)} images, {len(anns)} boxes -> {out_dir / 'manifest.json'}"
        if args.split is not None:
            train, test = split_train_test(result, args.split, args.seed)
            save_manifest(train, out.path(out_dir / "train.json"))
            save_manifest(test, out.path(out_dir / "test.json"))
            summary += f" (train {len(train.images)} / test {len(test.images)})"
    print(summary)


# --- synth -----------------------------------------------------------------

def _synth_config(args):
    from .synth import config_from_dict

    cfg = _read_json(args.config) if args.config else {}
    try:
        cam, template, miss = config_from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise CommandError(f"{args.config}: invalid synthetic config ({exc})")
    return cam, template, replace(miss, seed=args.seed)


def cmd_synth(args):
    from .synth import config_to_dict, generate_sequence, simulate_detector

    cam, template, miss = _synth_config(args)
    out_dir = Path(args.out)
    with Outputs() as out:
        if args.detect_on:
            gt = _load_manifest(args.detect_on)
            sizes = {im.id: (im.width, im.height) for im in gt.images}
            dets = simulate_detector(gt.annotations, miss, sizes)
            meta = dict(gt.meta)
            meta.update({"seed": args.seed, "detector": "simulated"})
            save_manifest(replace(gt, annotations=tuple(dets), meta=meta), out.path(out_dir / "detections.json"))
            print(f"{len(dets)} simulated detections for {len(gt.annotations)} boxes -> {out_dir / 'detections.json'}")
            return
        seq = generate_sequence(cam, template, args.frames, args.seed, args.noise)
        if not args.labels_only:
            for im, frame in zip(seq.manifest.images, seq.frames()):
                write_image(out.path(out_dir / im.file), frame)
        save_manifest(seq.manifest, out.path(out_dir / "manifest.json"))
        roi_cfg = seq.manifest.roi.to_dict()
        _write_json(out.path(out_dir / "roi.json"), roi_cfg)
        _write_json(out.path(out_dir / "config.json"), {**config_to_dict(cam, template, miss), "seed": args.seed})
        if args.detections:
            dets = simulate_detector(seq.manifest.annotations, miss, {im.id: (im.width, im.height) for im in seq.manifest.images})
            save_manifest(replace(seq.manifest, annotations=tuple(dets)), out.path(out_dir / "detections.json"))
    print(f"{args.frames} frames, {len(seq.manifest.annotations)} vehicles -> {out_dir}")


# --- eval ------------------------------------------------------------------

def cmd_eval(args):
    gt = _load_manifest(args.gt)
    det = _load_manifest(args.detections)
    known = {im.id for im in gt.images}
    stray = {a.image_id for a in det.annotations} - known
    if stray:
        raise CommandError(f"{args.detections}: detections on images missing from {args.gt}: {sorted(stray)[:5]}")
    if any(a.confidence is None for a in det.annotations):
        raise CommandError(f"{args.detections}: every detection needs a confidence")
    m = section_map_for(gt, args.section_length, args.sections)
    result = evaluate_by_section(gt.annotations, det.annotations, m, args.iou)
    print(f"{gt.case}: IoU {args.iou}, {m.section_count} sections of {m.section_length_m:g} m")
    print(result.to_table())
    with Outputs() as out:
        Path(out.path(args.out)).write_text(result.to_csv(), encoding="utf-8")


# --- report ----------------------------------------------------------------

def _parse_labeled(items, flag):
    pairs = []
    for item in items or []:
        label, sep, path = item.partition("=")
        if not sep:
            raise CommandError(f"{flag} expects LABEL=PATH, got {item!r}")
        pairs.append((label, path))
    return pairs


def cmd_report(args):
    from .plotting import AP_REFERENCE, plot_ap_by_section, plot_dataset_counts

    reports = []
    for path in args.manifest or []:
        manifest = _load_manifest(path)
        m = section_map_for(manifest, args.section_length, args.sections) if manifest.annotations else None
        reports.append(dataset_report(manifest, m))
    evals = []
    for label, path in _parse_labeled(args.eval, "--eval"):
        try:
            evals.append((label, read_eval_csv(path)))
        except FileNotFoundError:
            raise CommandError(f"{path}: no such file")
        except (ValueError, KeyError) as exc:
            raise CommandError(f"{path}: {exc}")
    if not reports and not evals:
        raise CommandError("report needs at least one --manifest or --eval")
    out_dir = Path(args.out)
    with Outputs() as out:
        if reports:
            print(f"{'case':>8} {'section':>8} {'images':>7} {'objects':>8}")
            with open(out.path(out_dir / "dataset_table.csv"), "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["case", "section", "images", "objects"])
                for r in reports:
                    for section, images, objects in r.as_rows():
                        writer.writerow([r.case, section, images, objects])
                        print(f"{r.case:>8} {section:>8} {images:7d} {objects:8d}")
            plot_dataset_counts(reports, out.path(out_dir / "dataset_counts.png"))
        if evals:
            sections = sorted({k for _, rows in evals for k in rows if k != "all"}, key=int)
            aps = {label: [rows[s]["ap"] for s in sections if s in rows] for label, rows in evals}
            with open(out.path(out_dir / "ap_by_section.csv"), "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["section"] + [label for label, _ in evals])
                for s in sections + ["all"]:
                    writer.writerow([s] + [repr(rows[s]["ap"]) if s in rows else "" for _, rows in evals])
            print(f"{'section':>8} " + " ".join(f"{label:>8}" for label, _ in evals))
            for s in sections + ["all"]:
                print(f"{s:>8} " + " ".join(f"{rows[s]['ap']:8.4f}" if s in rows else f"{'-':>8}" for _, rows in evals))
            for label, values in aps.items():
                spread = max(values) - min(values) if values else float("nan")
                status = "all above" if values and min(values) > AP_REFERENCE else "not all above"
                print(f"{label}: AP spread {spread:.4f}; {status} {AP_REFERENCE}")
            plot_ap_by_section(aps, out.path(out_dir / "ap_by_section.png"))
    print(f"report written to {out_dir}")


# --- entry point -----------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="tunnelipm", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sections = argparse.ArgumentParser(add_help=False)
    sections.add_argument("--sections", type=int, default=4)
    sections.add_argument("--section-length", type=float, default=50.0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common, sections], help="homographies from an ROI config")
    p.add_argument("--roi", required=True)
    p.add_argument("--out-size", type=parse_size)
    p.add_argument("--out", default="calibration.json")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("transform", parents=[common], help="build a case 1 or case 2 dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--case", type=int, choices=(1, 2), required=True)
    p.add_argument("--out-size", type=parse_size)
    p.add_argument("--split", type=float)
    p.add_argument("--fill", type=int, default=0)
    p.add_argument("--labels-only", action="store_true", help="transform annotations without touching images")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("synth", parents=[common], help="synthetic tunnel sequence or simulated detections")
    p.add_argument("--config")
    p.add_argument("--frames", type=int, default=500)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--detections", action="store_true", help="also write simulated detections")
    p.add_argument("--detect-on", metavar="MANIFEST", help="only run the simulated detector on MANIFEST")
    p.add_argument("--labels-only", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", parents=[common, sections], help="section-wise AP")
    p.add_argument("--gt", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", default="eval.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common, sections], help="dataset table, AP comparison and figures")
    p.add_argument("--manifest", action="append")
    p.add_argument("--eval", action="append", metavar="LABEL=CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ManifestError, TunnelIPMError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
