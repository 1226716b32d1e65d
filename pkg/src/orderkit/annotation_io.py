"""Reading and writing annotation documents and their order tokens.

Document layout::

    {"images": [{"image_id": 7,
                 "instances": [{"id": 1, "class": "person", "area": 900, "bottom_row": 40}],
                 "occlusion": [{"order": "1<2", "count": 2}],
                 "depth": [{"order": "1<2", "count": 3, "overlap": false}]}]}

Occlusion tokens: ``"1<2"`` (1 occludes 2), ``"1<2 & 2<1"`` (mutual) and
``"1|2"`` (annotated as no occlusion). Depth tokens: ``"1<2"`` (1 is closer)
and ``"1=2"`` (equal depth).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

from orderkit.errors import ParseError, SchemaError, SyntaxFormatError
from orderkit.model import (
    Depth,
    DepthRelation,
    ImageAnnotation,
    InstanceRef,
    OcclusionRelation,
    PairOrder,
    RangeKind,
    canonicalize,
)

log = logging.getLogger(__name__)

MIN_INSTANCE_AREA = 25 * 25

OCCLUSION = "occlusion"
DEPTH = "depth"


@dataclass(frozen=True)
class DatasetFile:
    """Parsed annotation document in canonical order (images, instances and pairs sorted)."""

    images: tuple[ImageAnnotation, ...] = ()
    small_instances: Mapping[int, tuple[int, ...]] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))

    def image(self, image_id: int) -> ImageAnnotation:
        for img in self.images:
            if img.image_id == image_id:
                return img
        raise KeyError(image_id)


# -- order tokens ---------------------------------------------------------------------


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def offset(self, pos: Optional[int] = None) -> int:
        pos = self.pos if pos is None else pos
        return len(self.text[:pos].encode("utf-8"))

    def fail(self, message: str, pos: Optional[int] = None):
        raise ParseError(message, offset=self.offset(pos))

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def integer(self) -> int:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] in "0123456789":
            self.pos += 1
        if start == self.pos:
            self.fail("expected an instance id")
        return int(self.text[start:self.pos])

    def symbol(self, choices: str) -> str:
        self.skip_ws()
        if self.pos >= len(self.text):
            self.fail(f"expected one of {choices!r}, got end of token")
        ch = self.text[self.pos]
        if ch not in choices:
            self.fail(f"expected one of {choices!r}, got {ch!r}")
        self.pos += 1
        return ch

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)


def parse_order_token(kind: str, text: str) -> tuple[int, int, Any]:
    """Parse an order token into ``(first_id, second_id, relation)``.

    The relation is expressed from the point of view of the first id as written,
    so ``"2<1"`` yields ``(2, 1, A_OCCLUDES_B)``; pass the result through
    :func:`orderkit.model.canonicalize` for storage order. Errors carry the byte
    offset inside ``text``.
    """
    if kind not in (OCCLUSION, DEPTH):
        raise ValueError(f"unknown token kind {kind!r}")
    sc = _Scanner(text)
    a = sc.integer()
    op = sc.symbol("<|" if kind == OCCLUSION else "<=")
    sc.skip_ws()
    b_pos = sc.pos
    b = sc.integer()
    if a == b:
        sc.fail(f"instance {a} cannot be ordered against itself", b_pos)
    if kind == DEPTH:
        if not sc.at_end():
            sc.fail("unexpected trailing text")
        return a, b, Depth.CLOSER if op == "<" else Depth.EQUAL
    if op == "|":
        if not sc.at_end():
            sc.fail("unexpected trailing text")
        return a, b, OcclusionRelation.NONE
    if sc.at_end():
        return a, b, OcclusionRelation.A_OCCLUDES_B
    sc.symbol("&")
    sc.skip_ws()
    mirror_pos = sc.pos
    c = sc.integer()
    sc.symbol("<")
    d = sc.integer()
    if (c, d) != (b, a):
        sc.fail(f"bidirectional form must mirror {a}<{b} as {b}<{a}", mirror_pos)
    if not sc.at_end():
        sc.fail("unexpected trailing text")
    return a, b, OcclusionRelation.BIDIRECTIONAL


def format_occlusion_token(a: int, b: int, rel: OcclusionRelation) -> str:
    if rel is OcclusionRelation.NONE:
        return f"{a}|{b}"
    if rel is OcclusionRelation.A_OCCLUDES_B:
        return f"{a}<{b}"
    if rel is OcclusionRelation.B_OCCLUDES_A:
        return f"{b}<{a}"
    return f"{a}<{b} & {b}<{a}"


def format_depth_token(a: int, b: int, rel: Depth) -> str:
    if rel is Depth.CLOSER:
        return f"{a}<{b}"
    if rel is Depth.FARTHER:
        return f"{b}<{a}"
    return f"{a}={b}"


# -- documents ------------------------------------------------------------------------


def _expect(obj, typ, path: str, what: str):
    # bool is an int subclass; reject it wherever a number is expected
    if typ is int and isinstance(obj, bool) or not isinstance(obj, typ):
        raise SchemaError(f"expected {what}, got {type(obj).__name__}", path=path)
    return obj


def _field(obj: Mapping, key: str, typ, path: str, what: str, required: bool = True):
    if key not in obj or obj[key] is None:
        if required:
            raise SchemaError(f"missing field {key!r}", path=path)
        return None
    return _expect(obj[key], typ, f"{path}.{key}", what)


def _parse_instances(raw, path: str, image_id: int) -> list[InstanceRef]:
    _expect(raw, list, path, "an array")
    out = []
    for i, item in enumerate(raw):
        ipath = f"{path}[{i}]"
        _expect(item, dict, ipath, "an object")
        iid = _field(item, "id", int, ipath, "an integer")
        if iid < 0:
            raise SchemaError("instance id must be non-negative", path=f"{ipath}.id")
        area = _field(item, "area", int, ipath, "an integer", required=False)
        if area is not None and area <= 0:
            raise SchemaError("area must be positive", path=f"{ipath}.area")
        bottom = _field(item, "bottom_row", int, ipath, "an integer", required=False)
        if bottom is not None and bottom < 0:
            raise SchemaError("bottom_row must be non-negative", path=f"{ipath}.bottom_row")
        out.append(
            InstanceRef(
                instance_id=iid,
                image_id=image_id,
                class_label=_field(item, "class", str, ipath, "a string", required=False),
                bbox_area_px=area,
                bottom_row=bottom,
            )
        )
    return out


def _parse_orders(raw, kind: str, path: str, declared: set, require_counts: bool):
    _expect(raw, list, path, "an array")
    out: dict[tuple[int, int], tuple[Any, Optional[int]]] = {}
    for i, item in enumerate(raw):
        epath = f"{path}[{i}]"
        _expect(item, dict, epath, "an object")
        text = _field(item, "order", str, epath, "a string")
        try:
            a, b, rel = parse_order_token(kind, text)
        except ParseError as exc:
            raise SchemaError(exc.message, path=f"{epath}.order", offset=exc.offset) from None
        count = _field(item, "count", int, epath, "an integer", required=require_counts)
        if count is not None and count < 2:
            raise SchemaError(f"count must be >= 2, got {count}", path=f"{epath}.count")
        for inst in (a, b):
            if inst not in declared:
                raise SchemaError(f"unknown instance id {inst}", path=f"{epath}.order")
        if kind == DEPTH:
            overlap = _field(item, "overlap", bool, epath, "a boolean")
            rel = DepthRelation(rel, RangeKind.OVERLAP if overlap else RangeKind.DISTINCT)
        if a > b:
            a, b, rel = b, a, rel.swapped()
        if (a, b) in out:
            raise SchemaError(f"duplicate {kind} order for pair ({a}, {b})", path=epath)
        out[(a, b)] = (rel, count)
    return out


def _parse_image(raw, path: str, require_counts: bool) -> ImageAnnotation:
    _expect(raw, dict, path, "an object")
    image_id = _field(raw, "image_id", int, path, "an integer")
    if "instances" not in raw:
        raise SchemaError("missing field 'instances'", path=path)
    instances = _parse_instances(raw["instances"], f"{path}.instances", image_id)
    declared = set()
    for i, inst in enumerate(instances):
        if inst.instance_id in declared:
            raise SchemaError(f"duplicate instance id {inst.instance_id}", path=f"{path}.instances[{i}].id")
        declared.add(inst.instance_id)
    orders = {}
    for kind in (OCCLUSION, DEPTH):
        if kind not in raw:
            raise SchemaError(f"missing field {kind!r}", path=path)
        orders[kind] = _parse_orders(raw[kind], kind, f"{path}.{kind}", declared, require_counts)
    pairs = []
    for key in sorted(set(orders[OCCLUSION]) | set(orders[DEPTH])):
        occ, occ_count = orders[OCCLUSION].get(key, (None, None))
        dep, dep_count = orders[DEPTH].get(key, (None, None))
        pairs.append(PairOrder(key[0], key[1], occ, occ_count, dep, dep_count))
    instances.sort(key=lambda inst: inst.instance_id)
    return ImageAnnotation(image_id=image_id, instances=tuple(instances), pairs=tuple(pairs))


def flag_small_instances(instances: Iterable[InstanceRef], min_side: int = 25) -> set[int]:
    """Ids of instances whose pixel area is below ``min_side ** 2``.

    Instances without an area cannot be judged and are skipped with a warning.
    """
    floor = min_side * min_side
    flagged = set()
    for inst in instances:
        if inst.bbox_area_px is None:
            log.warning("instance %s has no area; size check skipped", inst.instance_id)
            continue
        if inst.bbox_area_px < floor:
            flagged.add(inst.instance_id)
    return flagged


def dataset_from_obj(doc: Any, require_counts: bool = True) -> DatasetFile:
    _expect(doc, dict, "$", "an object")
    if "images" not in doc:
        raise SchemaError("missing field 'images'", path="$")
    raw_images = _expect(doc["images"], list, "$.images", "an array")
    images = []
    seen = set()
    for i, raw in enumerate(raw_images):
        img = _parse_image(raw, f"images[{i}]", require_counts)
        if img.image_id in seen:
            raise SchemaError(f"duplicate image id {img.image_id}", path=f"images[{i}].image_id")
        seen.add(img.image_id)
        images.append(img)
    images.sort(key=lambda img: img.image_id)
    small = {}
    for img in images:
        flagged = flag_small_instances(inst for inst in img.instances if inst.bbox_area_px is not None)
        if flagged:
            small[img.image_id] = tuple(sorted(flagged))
    return DatasetFile(images=tuple(images), small_instances=small)


def parse_dataset(data: bytes | str, require_counts: bool = True) -> DatasetFile:
    """Parse and validate an annotation document.

    Args:
      data: UTF-8 bytes (or already-decoded text) of the document.
      require_counts: ground-truth files must carry a count >= 2 on every order;
        prediction files may omit counts.

    Returns:
      A :class:`DatasetFile` with every pair canonicalized. Instances smaller
      than 25x25 pixels are listed in ``small_instances``, not dropped.

    Raises:
      SyntaxFormatError: the bytes are not a JSON document.
      SchemaError: the document violates the schema; ``path`` names the field.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SyntaxFormatError(f"not UTF-8: {exc.reason}", offset=exc.start) from None
    else:
        text = data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SyntaxFormatError(exc.msg, offset=len(text[: exc.pos].encode("utf-8"))) from None
    return dataset_from_obj(doc, require_counts=require_counts)


def image_to_obj(img: ImageAnnotation) -> dict:
    instances = []
    for inst in sorted(img.instances, key=lambda i: i.instance_id):
        item: dict[str, Any] = {"id": inst.instance_id}
        if inst.class_label is not None:
            item["class"] = inst.class_label
        if inst.bbox_area_px is not None:
            item["area"] = inst.bbox_area_px
        if inst.bottom_row is not None:
            item["bottom_row"] = inst.bottom_row
        instances.append(item)
    occlusion, depth = [], []
    for p in sorted((canonicalize(p) for p in img.pairs), key=lambda p: p.key):
        if p.occlusion is not None:
            entry: dict[str, Any] = {"order": format_occlusion_token(p.a, p.b, p.occlusion)}
            if p.occlusion_count is not None:
                entry["count"] = p.occlusion_count
            occlusion.append(entry)
        if p.depth is not None:
            entry = {"order": format_depth_token(p.a, p.b, p.depth.relation)}
            if p.depth_count is not None:
                entry["count"] = p.depth_count
            entry["overlap"] = p.depth.overlap
            depth.append(entry)
    return {"image_id": img.image_id, "instances": instances, "occlusion": occlusion, "depth": depth}


def dataset_to_obj(d: DatasetFile) -> dict:
    return {"images": [image_to_obj(img) for img in sorted(d.images, key=lambda i: i.image_id)]}


def serialize_dataset(d: DatasetFile) -> bytes:
    """Deterministic UTF-8 encoding: sorted images and pairs, 2-space indent, LF endings."""
    text = json.dumps(dataset_to_obj(d), indent=2, ensure_ascii=False)
    return (text + "\n").encode("utf-8")


# -- released-file adapter ------------------------------------------------------------

_RELEASE_KEYS = {"annotations": "images", "instance_ids": "instances"}


def adapt_release(doc: Mapping[str, Any], infer_no_occlusion: bool = False) -> dict:
    """Map a released-dataset JSON object onto the canonical document layout.

    The released files list instance ids as a bare ``instance_ids`` array under
    ``annotations``. Those key names have not been checked against the
    published files, so anything already in canonical form passes through.

    With ``infer_no_occlusion`` a pair that has a depth order but no occlusion
    entry is given an explicit ``"a|b"`` order without a count; parse the result
    with ``require_counts=False``.
    """
    images = doc.get("images", doc.get("annotations"))
    if images is None:
        raise SchemaError("neither 'images' nor 'annotations' present", path="$")
    out = []
    for img in images:
        img = dict(img)
        if "instances" not in img and "instance_ids" in img:
            img["instances"] = [{"id": i} for i in img.pop("instance_ids")]
        img.setdefault("occlusion", [])
        img.setdefault("depth", [])
        if infer_no_occlusion:
            occluded = set()
            for e in img["occlusion"]:
                a, b, _ = parse_order_token(OCCLUSION, e["order"])
                occluded.add((min(a, b), max(a, b)))
            extra = []
            for e in img["depth"]:
                a, b, _ = parse_order_token(DEPTH, e["order"])
                key = (min(a, b), max(a, b))
                if key not in occluded:
                    occluded.add(key)
                    extra.append({"order": f"{key[0]}|{key[1]}"})
            img["occlusion"] = list(img["occlusion"]) + extra
        out.append(img)
    return {"images": out}
