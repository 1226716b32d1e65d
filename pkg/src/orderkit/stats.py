"""Dataset statistics, conditional order tables and the vote-aggregation protocol."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional, Sequence

from orderkit.annotation_io import DatasetFile, flag_small_instances
from orderkit.errors import AggregationError
from orderkit.metrics import weight_from_count
from orderkit.model import Depth, DepthRelation, ImageAnnotation, OcclusionRelation, RangeKind

__all__ = [
    "ConditionalTable",
    "DEPTH_LABELS",
    "OCCLUSION_LABELS",
    "SplitMix64",
    "StatsReport",
    "aggregate_votes",
    "conditional_tables",
    "dataset_statistics",
    "flag_small_instances",
    "subsample_instances",
    "weight_from_count",
]

OCCLUSION_LABELS = ("none", "a-occludes-b", "b-occludes-a", "bidirectional")
DEPTH_LABELS = ("closer", "farther", "equal", "overlap-closer", "overlap-farther", "overlap-equal")
OCC_TYPES = ("none", "uni", "bi")
DEPTH_TYPES = ("distinct-strict", "distinct-equal", "overlap-directed", "overlap-mutual")

_OCC_INDEX = {
    OcclusionRelation.NONE: 0,
    OcclusionRelation.A_OCCLUDES_B: 1,
    OcclusionRelation.B_OCCLUDES_A: 2,
    OcclusionRelation.BIDIRECTIONAL: 3,
}


def _depth_index(rel: DepthRelation) -> int:
    base = 0 if rel.range_kind is RangeKind.DISTINCT else 3
    return base + {Depth.CLOSER: 0, Depth.FARTHER: 1, Depth.EQUAL: 2}[rel.relation]


def occlusion_type(rel: OcclusionRelation) -> str:
    if rel is OcclusionRelation.NONE:
        return "none"
    return "bi" if rel is OcclusionRelation.BIDIRECTIONAL else "uni"


def depth_type(rel: DepthRelation) -> str:
    equal = rel.relation is Depth.EQUAL
    if rel.range_kind is RangeKind.DISTINCT:
        return "distinct-equal" if equal else "distinct-strict"
    return "overlap-mutual" if equal else "overlap-directed"


# -- aggregation ----------------------------------------------------------------------


def aggregate_votes(votes: Iterable[Hashable]) -> tuple[Hashable, int]:
    """Replay the collection rule: keep asking workers until two agree.

    Returns the first label to be given twice and the number of workers
    consulted up to and including that second vote.
    """
    seen = set()
    n = 0
    for n, label in enumerate(votes, start=1):
        if label in seen:
            return label, n
        seen.add(label)
    if n == 0:
        raise AggregationError("empty vote stream")
    raise AggregationError(f"no label reached two votes in {n} votes")


# -- seeded sampling ------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood), reproducible across languages.

    state += 0x9E3779B97F4A7C15; z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9; z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
    return z ^ (z >> 31), all modulo 2**64.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection of the biased top range."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next()
            if x < limit:
                return x % n


def subsample_instances(ann: ImageAnnotation, cap: int = 10, seed: int = 0) -> ImageAnnotation:
    """Keep at most ``cap`` instances, chosen uniformly with a seeded generator.

    Selection runs a partial Fisher-Yates shuffle over instance ids sorted
    ascending; surviving instances keep their original order and only pairs
    between survivors are retained.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    if len(ann.instances) <= cap:
        return ann
    ids = sorted(inst.instance_id for inst in ann.instances)
    rng = SplitMix64(seed)
    for i in range(cap):
        j = i + rng.below(len(ids) - i)
        ids[i], ids[j] = ids[j], ids[i]
    keep = set(ids[:cap])
    return ImageAnnotation(
        image_id=ann.image_id,
        instances=tuple(inst for inst in ann.instances if inst.instance_id in keep),
        pairs=tuple(p for p in ann.pairs if p.a in keep and p.b in keep),
    )


# -- statistics -----------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionalTable:
    """``matrix[r][c] = P(row label | column label)``; all-zero columns had no samples."""

    rows: tuple[str, ...]
    columns: tuple[str, ...]
    matrix: tuple[tuple[float, ...], ...]
    column_totals: tuple[int, ...]

    @property
    def empty_columns(self) -> tuple[str, ...]:
        return tuple(c for c, t in zip(self.columns, self.column_totals) if t == 0)

    def get(self, row: str, column: str) -> float:
        return self.matrix[self.rows.index(row)][self.columns.index(column)]


def _normalize_columns(counts: list[list[int]], rows, columns) -> ConditionalTable:
    totals = [sum(counts[r][c] for r in range(len(rows))) for c in range(len(columns))]
    matrix = tuple(
        tuple(counts[r][c] / totals[c] if totals[c] else 0.0 for c in range(len(columns)))
        for r in range(len(rows))
    )
    return ConditionalTable(tuple(rows), tuple(columns), matrix, tuple(totals))


@dataclass
class JointCounts:
    """Raw occlusion x depth co-occurrence counts; mergeable by addition."""

    counts: list[list[int]] = field(default_factory=lambda: [[0] * len(DEPTH_LABELS) for _ in OCCLUSION_LABELS])

    def add(self, occ: OcclusionRelation, dep: DepthRelation):
        self.counts[_OCC_INDEX[occ]][_depth_index(dep)] += 1

    def __add__(self, other: "JointCounts") -> "JointCounts":
        return JointCounts([[x + y for x, y in zip(r1, r2)] for r1, r2 in zip(self.counts, other.counts)])

    def tables(self) -> tuple[ConditionalTable, ConditionalTable]:
        occ_given_depth = _normalize_columns(self.counts, OCCLUSION_LABELS, DEPTH_LABELS)
        transposed = [list(col) for col in zip(*self.counts)]
        depth_given_occ = _normalize_columns(transposed, DEPTH_LABELS, OCCLUSION_LABELS)
        return occ_given_depth, depth_given_occ


def joint_counts(images: Iterable[ImageAnnotation]) -> JointCounts:
    jc = JointCounts()
    for img in images:
        for p in img.pairs:
            if p.occlusion is not None and p.depth is not None:
                jc.add(p.occlusion, p.depth)
    return jc


def conditional_tables(d: DatasetFile) -> tuple[ConditionalTable, ConditionalTable]:
    """P(occlusion | depth) and P(depth | occlusion) over pairs annotated with both."""
    return joint_counts(d.images).tables()


@dataclass
class RawStats:
    n_images: int = 0
    n_instances: int = 0
    instances_per_image: Counter = field(default_factory=Counter)
    occlusion_counts: Counter = field(default_factory=Counter)
    depth_counts: Counter = field(default_factory=Counter)
    occ_types: Counter = field(default_factory=Counter)
    depth_types: Counter = field(default_factory=Counter)
    joint: JointCounts = field(default_factory=JointCounts)

    def __add__(self, other: "RawStats") -> "RawStats":
        return RawStats(
            self.n_images + other.n_images,
            self.n_instances + other.n_instances,
            self.instances_per_image + other.instances_per_image,
            self.occlusion_counts + other.occlusion_counts,
            self.depth_counts + other.depth_counts,
            self.occ_types + other.occ_types,
            self.depth_types + other.depth_types,
            self.joint + other.joint,
        )


def image_stats(img: ImageAnnotation) -> RawStats:
    s = RawStats(n_images=1, n_instances=len(img.instances))
    s.instances_per_image[len(img.instances)] += 1
    for p in img.pairs:
        if p.occlusion is not None:
            s.occ_types[occlusion_type(p.occlusion)] += 1
            if p.occlusion_count is not None:
                s.occlusion_counts[p.occlusion_count] += 1
        if p.depth is not None:
            s.depth_types[depth_type(p.depth)] += 1
            if p.depth_count is not None:
                s.depth_counts[p.depth_count] += 1
        if p.occlusion is not None and p.depth is not None:
            s.joint.add(p.occlusion, p.depth)
    return s


def _distribution(counter: Counter, labels: Sequence[str]) -> dict[str, float]:
    total = sum(counter[k] for k in labels)
    return {k: (counter[k] / total if total else 0.0) for k in labels}


def _histogram(counter: Counter) -> dict[int, int]:
    return {k: counter[k] for k in sorted(counter)}


@dataclass(frozen=True)
class StatsReport:
    n_images: int
    n_instances: int
    n_orders: int
    instances_per_image: dict[int, int]
    count_hist: dict[str, dict[int, int]]
    occ_types: dict[str, float]
    depth_types: dict[str, float]
    first_two_share: dict[str, Optional[float]]
    p_occ_given_depth: ConditionalTable
    p_depth_given_occ: ConditionalTable

    def as_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "n_instances": self.n_instances,
            "n_orders": self.n_orders,
            "instances_per_image": {str(k): v for k, v in self.instances_per_image.items()},
            "count_hist": {
                kind: {str(k): v for k, v in hist.items()} for kind, hist in self.count_hist.items()
            },
            "occ_types": dict(self.occ_types),
            "depth_types": dict(self.depth_types),
            "first_two_share": dict(self.first_two_share),
            "p_occ_given_depth": [list(r) for r in self.p_occ_given_depth.matrix],
            "p_depth_given_occ": [list(r) for r in self.p_depth_given_occ.matrix],
        }


def finalize_stats(raw: RawStats) -> StatsReport:
    def first_two(counter: Counter) -> Optional[float]:
        total = sum(counter.values())
        return counter[2] / total if total else None

    occ_table, depth_table = raw.joint.tables()
    return StatsReport(
        n_images=raw.n_images,
        n_instances=raw.n_instances,
        n_orders=sum(raw.occ_types.values()) + sum(raw.depth_types.values()),
        instances_per_image=_histogram(raw.instances_per_image),
        count_hist={"occlusion": _histogram(raw.occlusion_counts), "depth": _histogram(raw.depth_counts)},
        occ_types=_distribution(raw.occ_types, OCC_TYPES),
        depth_types=_distribution(raw.depth_types, DEPTH_TYPES),
        first_two_share={"occlusion": first_two(raw.occlusion_counts), "depth": first_two(raw.depth_counts)},
        p_occ_given_depth=occ_table,
        p_depth_given_occ=depth_table,
    )


def dataset_statistics(d: DatasetFile) -> StatsReport:
    """Totals, histograms and order-type distributions for a dataset.

    ``n_orders`` counts occlusion and depth annotations separately, so a pair
    annotated for both contributes two. ``first_two_share`` is the per-pair
    fraction of annotations settled by the first two workers (count == 2).
    """
    raw = RawStats()
    for img in d.images:
        raw = raw + image_stats(img)
    return finalize_stats(raw)
