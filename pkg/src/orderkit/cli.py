"""``orderkit`` command line: validate, eval, baseline, loss, stats, aggregate, subsample.

Machine-readable results go to stdout, diagnostics to stderr. Exit codes:
0 success, 1 validation failure, 2 usage error, 3 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from functools import reduce
from typing import Any, Callable, Iterable, Sequence, TypeVar

import numpy as np

from orderkit import annotation_io as aio
from orderkit import baselines, losses, metrics, rasters, stats
from orderkit.errors import OrderError, SyntaxFormatError
from orderkit.model import (
    Depth,
    DepthRelation,
    ImageAnnotation,
    OcclusionMode,
    PairOrder,
    build_order_graph,
    check_depth_consistency,
)

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("orderkit")

T = TypeVar("T")
R = TypeVar("R")


def _map(fn: Callable[[T], R], items: Sequence[T], jobs: int) -> list[R]:
    # executor.map keeps input order, so reductions see images in sorted order
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def format_report(obj: Any, indent: int = 0) -> str:
    """JSON with 2-space indentation and every float written with 6 decimals."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {format_report(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(format_report(v) for v in obj) + "]"
        items = [inner + format_report(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return f"{obj:.6f}"
    if isinstance(obj, int):
        return str(obj)
    return json.dumps(obj, ensure_ascii=False)


def _emit(obj: Any):
    sys.stdout.write(format_report(obj) + "\n")


def _read(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _load_dataset(path: str, require_counts: bool = True) -> aio.DatasetFile:
    return aio.parse_dataset(_read(path), require_counts=require_counts)


# -- validate -------------------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        d = _load_dataset(args.path)
    except SyntaxFormatError:
        raise
    except OrderError as exc:
        print(f"invalid: {exc}")
        return EXIT_INVALID
    for img in d.images:
        notes = []
        for cycle in check_depth_consistency(build_order_graph(img)):
            notes.append("depth cycle " + " -> ".join(str(n) for n in cycle + (cycle[0],)))
        small = d.small_instances.get(img.image_id)
        if small:
            notes.append("small instances " + ",".join(str(i) for i in small))
        print(f"image {img.image_id}: " + ("; ".join(notes) if notes else "ok"))
    print(f"valid: {len(d.images)} images")
    return EXIT_OK


# -- eval -----------------------------------------------------------------------------


def _paired_images(gt: aio.DatasetFile, pred: aio.DatasetFile) -> list[tuple[ImageAnnotation, ImageAnnotation]]:
    gt_ids = [img.image_id for img in gt.images]
    pred_ids = [img.image_id for img in pred.images]
    if gt_ids != pred_ids:
        missing = sorted(set(gt_ids) ^ set(pred_ids))
        raise metrics.MetricError(f"image sets differ, e.g. image {missing[0]}")
    return list(zip(gt.images, pred.images))


def _occlusion_map(img: ImageAnnotation):
    return {p.key: p.occlusion for p in img.pairs if p.occlusion is not None}


def cmd_eval_occ(args) -> int:
    gt = _load_dataset(args.gt)
    pred = _load_dataset(args.pred, require_counts=False)
    mode = OcclusionMode(args.mode)

    def one(pair):
        g_img, p_img = pair
        g, p = metrics.filter_for_mode(_occlusion_map(g_img), _occlusion_map(p_img), mode)
        try:
            return metrics.occlusion_counts(g, p, mode)
        except OrderError as exc:
            raise type(exc)(f"image {g_img.image_id}: {exc}") from None

    parts = _map(one, _paired_images(gt, pred), args.jobs)
    total = reduce(lambda x, y: x + y, parts, metrics.OcclusionCounts())
    _emit(total.prf().as_dict())
    return EXIT_OK


def _depth_maps(g_img: ImageAnnotation, p_img: ImageAnnotation):
    g = {p.key: (p.depth, p.depth_count) for p in g_img.pairs if p.depth is not None}
    p = {q.key: q.depth for q in p_img.pairs if q.depth is not None}
    if set(g) != set(p):
        missing = sorted(set(g) ^ set(p))
        raise metrics.MetricError(f"image {g_img.image_id}: depth pairs differ, e.g. {missing[0]}")
    return g, p


def cmd_eval_depth(args) -> int:
    gt = _load_dataset(args.gt)
    pred = _load_dataset(args.pred, require_counts=False)
    categories = [metrics.Category(args.category)] if args.category else list(metrics.Category)

    def one(pair):
        g, p = _depth_maps(*pair)
        return {c: metrics.whdr_accumulate(g, p, c) for c in categories}

    parts = _map(one, _paired_images(gt, pred), args.jobs)
    totals = {c: reduce(lambda x, y: x + y, (part[c] for part in parts), metrics.WhdrAccumulator()) for c in categories}
    if args.category:
        value = totals[categories[0]].value()
        _emit({"whdr": {categories[0].value: value}})
    else:
        _emit({"whdr": metrics.whdr_report({c.value: acc for c, acc in totals.items()})})
    return EXIT_OK


def cmd_eval_disparity(args) -> int:
    gt = rasters.load_disparity(_read(args.gt))
    pred = rasters.load_disparity(_read(args.pred))
    valid = rasters.load_mask(_read(args.valid)) if args.valid else gt > 0
    report = metrics.depth_map_metrics(gt, pred, valid, scale=args.median_scale)
    _emit(report.as_dict())
    return EXIT_OK


def _parse_queries(raw: bytes):
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SyntaxFormatError(f"unreadable query file: {exc}") from None
    names = {"closer": Depth.CLOSER, "equal": Depth.EQUAL, "farther": Depth.FARTHER}
    out = []
    try:
        for q in doc["queries"]:
            out.append((tuple(q["p1"]), tuple(q["p2"]), names[q["relation"]]))
    except (KeyError, TypeError) as exc:
        raise aio.SchemaError(f"bad query entry: {exc}", path="queries") from None
    return out


def cmd_eval_points(args) -> int:
    disp = rasters.load_disparity(_read(args.disparity))
    result = metrics.point_pair_eval(disp, _parse_queries(_read(args.queries)))
    _emit(result.as_dict())
    return EXIT_OK


# -- baseline -------------------------------------------------------------------------


def _image_dir(root: str, image_id: int) -> str:
    return os.path.join(root, str(image_id))


def _instance_mask(root: str, image_id: int, instance_id: int) -> rasters.InstanceMask:
    return rasters.load_mask(_read(os.path.join(_image_dir(root, image_id), f"{instance_id}.pgm")))


def _with_geometry(img: ImageAnnotation, root: str | None) -> dict:
    """Area and bottom row per instance, from the annotation or else from the masks."""
    out = {}
    for inst in img.instances:
        area, bottom = inst.bbox_area_px, inst.bottom_row
        if (area is None or bottom is None) and root:
            m = _instance_mask(root, img.image_id, inst.instance_id)
            area = m.area if area is None else area
            bottom = m.bottom_row if bottom is None else bottom
        out[inst.instance_id] = inst.__class__(
            instance_id=inst.instance_id,
            image_id=img.image_id,
            class_label=inst.class_label,
            bbox_area_px=area or None,
            bottom_row=bottom,
        )
    return out


def _predict_image(img: ImageAnnotation, args) -> ImageAnnotation:
    method = args.method
    pairs = []
    if method in ("area", "yaxis"):
        refs = _with_geometry(img, args.rasters)
        fn = baselines.predict_by_area if method == "area" else baselines.predict_by_yaxis
        for p in img.pairs:
            a, b = refs[p.a], refs[p.b]
            occ = fn(a, b, baselines.OCCLUSION) if p.occlusion is not None else None
            dep = DepthRelation(fn(a, b, baselines.DEPTH), p.depth.range_kind) if p.depth is not None else None
            pairs.append(PairOrder(p.a, p.b, occlusion=occ, depth=dep))
    else:
        if not args.rasters:
            raise aio.SchemaError(f"--rasters is required for {method}")
        stat = "mean" if method == "disp-mean" else "median"
        disp = rasters.load_disparity(_read(os.path.join(_image_dir(args.rasters, img.image_id), "disparity.pfm")))
        masks: dict[int, rasters.InstanceMask] = {}
        trim = baselines.TrimSpec(args.trim)
        for p in img.pairs:
            if p.depth is None:
                continue
            for i in (p.a, p.b):
                if i not in masks:
                    masks[i] = _instance_mask(args.rasters, img.image_id, i)
            rel = baselines.predict_depth_from_disparity(disp, masks[p.a], masks[p.b], stat, trim, args.eq_tol)
            pairs.append(PairOrder(p.a, p.b, depth=DepthRelation(rel, p.depth.range_kind)))
    return ImageAnnotation(image_id=img.image_id, instances=img.instances, pairs=tuple(pairs))


def cmd_baseline(args) -> int:
    d = _load_dataset(args.annotations)
    images = _map(lambda img: _predict_image(img, args), list(d.images), args.jobs)
    out = aio.serialize_dataset(aio.DatasetFile(images=tuple(images)))
    if args.output:
        with open(args.output, "wb") as fh:
            fh.write(out)
    else:
        sys.stdout.buffer.write(out)
    return EXIT_OK


# -- loss -----------------------------------------------------------------------------


def cmd_loss(args) -> int:
    disp = rasters.load_disparity(_read(args.disparity))
    if args.kind == "disp":
        if not (args.mask_a and args.mask_b and args.order is not None):
            raise aio.SchemaError("disp loss needs --mask-a, --mask-b and --order")
        a = rasters.load_mask(_read(args.mask_a))
        b = rasters.load_mask(_read(args.mask_b))
        value = losses.instance_disparity_loss(disp, a, b, args.order)
    else:
        if not args.image:
            raise aio.SchemaError("smoothness loss needs --image R G B")
        planes = np.stack([rasters.load_plane(_read(p)) for p in args.image])
        value = losses.smoothness_loss(disp, planes)
    print(repr(float(value)))
    return EXIT_OK


# -- stats / aggregate / subsample ----------------------------------------------------


def cmd_stats(args) -> int:
    d = _load_dataset(args.path, require_counts=not args.lenient)
    parts = _map(stats.image_stats, list(d.images), args.jobs)
    report = stats.finalize_stats(reduce(lambda x, y: x + y, parts, stats.RawStats()))
    _emit(report.as_dict())
    if args.figures:
        from orderkit.plotting import render_stats_figures

        for path in render_stats_figures(report, args.figures):
            log.info("wrote %s", path)
    return EXIT_OK


def _vote_streams(text: str) -> Iterable[list[str]]:
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            yield line.split()


def cmd_aggregate(args) -> int:
    try:
        text = _read(args.path).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SyntaxFormatError(f"vote file is not UTF-8: {exc.reason}", offset=exc.start) from None
    status = EXIT_OK
    for n, votes in enumerate(_vote_streams(text), start=1):
        try:
            label, count = stats.aggregate_votes(votes)
        except OrderError as exc:
            print(f"line {n}: {exc}", file=sys.stderr)
            print("unresolved")
            status = EXIT_INVALID
            continue
        print(f"{label} {count}")
    return status


def cmd_subsample(args) -> int:
    d = _load_dataset(args.path)
    images = tuple(stats.subsample_instances(img, args.cap, args.seed + img.image_id) for img in d.images)
    sys.stdout.buffer.write(aio.serialize_dataset(aio.DatasetFile(images=images)))
    return EXIT_OK


# -- wiring ---------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orderkit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log diagnostics to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an annotation file")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)

    ev = sub.add_parser("eval", help="evaluate predictions")
    evs = ev.add_subparsers(dest="kind", required=True)
    p = evs.add_parser("occ", help="occlusion recall/precision/F1")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--mode", choices=[m.value for m in OcclusionMode], default="with-bi")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_eval_occ)
    p = evs.add_parser("depth-order", help="WHDR over instance pairs")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--category", choices=[c.value for c in metrics.Category])
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_eval_depth)
    p = evs.add_parser("disparity", help="dense map error metrics")
    p.add_argument("--gt", required=True, help="PFM ground truth")
    p.add_argument("--pred", required=True, help="PFM prediction")
    p.add_argument("--valid", help="PGM of pixels with ground truth (default: gt > 0)")
    p.add_argument("--median-scale", action="store_true")
    p.set_defaults(func=cmd_eval_disparity)
    p = evs.add_parser("points", help="point-pair depth order queries")
    p.add_argument("--disparity", required=True)
    p.add_argument("--queries", required=True, help='JSON {"queries": [{"p1": [r, c], "p2": [r, c], "relation": "closer"}]}')
    p.set_defaults(func=cmd_eval_points)

    p = sub.add_parser("baseline", help="predict orders with a heuristic")
    p.add_argument("annotations")
    p.add_argument("--method", required=True, choices=["area", "yaxis", "disp-mean", "disp-median"])
    p.add_argument("--rasters", help="directory holding <image_id>/<instance_id>.pgm and <image_id>/disparity.pfm")
    p.add_argument("--trim", type=float, default=0.05)
    p.add_argument("--eq-tol", type=float, default=0.0)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("loss", help="evaluate a disparity loss")
    p.add_argument("--kind", choices=["disp", "smooth"], required=True)
    p.add_argument("--disparity", required=True)
    p.add_argument("--mask-a")
    p.add_argument("--mask-b")
    p.add_argument("--order", type=int, choices=[1, -1], help="1 if A is closer, -1 if farther")
    p.add_argument("--image", nargs=3, metavar=("R", "G", "B"))
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("stats", help="dataset statistics and conditional tables")
    p.add_argument("path")
    p.add_argument("--figures", help="also render PNG figures into this directory")
    p.add_argument("--lenient", action="store_true", help="accept orders without counts")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("aggregate", help="reduce vote streams (one per line) to label and count")
    p.add_argument("path")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("subsample", help="cap instances per image with a seeded sampler")
    p.add_argument("path")
    p.add_argument("--cap", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_subsample)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except SyntaxFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OrderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
