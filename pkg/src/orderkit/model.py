"""Instances, pairwise occlusion/depth orders and per-image order graphs."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import networkx as nx

from orderkit.errors import GraphError, SchemaError, SelfPairError, UnsupportedLabelError


class OcclusionRelation(enum.Enum):
    """Occlusion between instances A and B, A being the lower id in canonical form."""

    NONE = (0, 0)
    A_OCCLUDES_B = (1, 0)
    B_OCCLUDES_A = (0, 1)
    BIDIRECTIONAL = (1, 1)

    @property
    def flags(self) -> tuple[int, int]:
        """``(o_AB, o_BA)``: whether A occludes B and whether B occludes A."""
        return self.value

    @classmethod
    def from_flags(cls, a_occludes_b: bool, b_occludes_a: bool) -> "OcclusionRelation":
        return cls((int(bool(a_occludes_b)), int(bool(b_occludes_a))))

    def swapped(self) -> "OcclusionRelation":
        ab, ba = self.value
        return OcclusionRelation((ba, ab))


class Depth(enum.Enum):
    """Depth of A relative to B. The value is the signed code used by the disparity loss."""

    CLOSER = 1
    EQUAL = 0
    FARTHER = -1

    @property
    def code(self) -> int:
        return self.value

    def swapped(self) -> "Depth":
        return Depth(-self.value)


class RangeKind(enum.Enum):
    DISTINCT = "distinct"
    OVERLAP = "overlap"


@dataclass(frozen=True)
class DepthRelation:
    relation: Depth
    range_kind: RangeKind = RangeKind.DISTINCT

    def swapped(self) -> "DepthRelation":
        return DepthRelation(self.relation.swapped(), self.range_kind)

    @property
    def overlap(self) -> bool:
        return self.range_kind is RangeKind.OVERLAP


class OcclusionMode(enum.Enum):
    WITH_BI = "with-bi"
    WITHOUT_BI = "without-bi"


class EdgeTag(enum.Enum):
    STRICT_DISTINCT = "strict-distinct"
    EQUAL = "equal"
    OVERLAP_DIRECTED = "overlap-directed"
    OVERLAP_MUTUAL = "overlap-mutual"


@dataclass(frozen=True)
class InstanceRef:
    instance_id: int
    image_id: Optional[int] = None
    class_label: Optional[str] = None
    bbox_area_px: Optional[int] = None
    bottom_row: Optional[int] = None

    def __post_init__(self):
        if self.instance_id < 0:
            raise SchemaError(f"instance id must be non-negative, got {self.instance_id}")
        if self.bbox_area_px is not None and self.bbox_area_px <= 0:
            raise SchemaError(f"area must be positive, got {self.bbox_area_px}")
        if self.bottom_row is not None and self.bottom_row < 0:
            raise SchemaError(f"bottom_row must be non-negative, got {self.bottom_row}")


@dataclass(frozen=True)
class PairOrder:
    """Annotated relations for one unordered instance pair.

    Counts are the number of workers consulted before two agreed. They may be
    ``None`` for predictions, which carry orders only.
    """

    a: int
    b: int
    occlusion: Optional[OcclusionRelation] = None
    occlusion_count: Optional[int] = None
    depth: Optional[DepthRelation] = None
    depth_count: Optional[int] = None

    def __post_init__(self):
        if self.a == self.b:
            raise SelfPairError(f"pair ({self.a}, {self.b}) relates an instance to itself")
        if self.occlusion is None and self.depth is None:
            raise SchemaError(f"pair ({self.a}, {self.b}) has neither occlusion nor depth order")
        for name, rel, count in (
            ("occlusion", self.occlusion, self.occlusion_count),
            ("depth", self.depth, self.depth_count),
        ):
            if count is None:
                continue
            if rel is None:
                raise SchemaError(f"{name}_count given without a {name} order")
            if count < 2:
                raise SchemaError(f"{name} count must be >= 2, got {count}")

    @property
    def key(self) -> tuple[int, int]:
        return (self.a, self.b)

    @property
    def is_canonical(self) -> bool:
        return self.a < self.b


def canonicalize(pair: PairOrder) -> PairOrder:
    """Return ``pair`` stored with ``a < b``, flipping directed relations if swapped."""
    if pair.a < pair.b:
        return pair
    return replace(
        pair,
        a=pair.b,
        b=pair.a,
        occlusion=None if pair.occlusion is None else pair.occlusion.swapped(),
        depth=None if pair.depth is None else pair.depth.swapped(),
    )


@dataclass(frozen=True)
class ImageAnnotation:
    image_id: int
    instances: tuple[InstanceRef, ...] = ()
    pairs: tuple[PairOrder, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "pairs", tuple(self.pairs))
        ids = [inst.instance_id for inst in self.instances]
        if len(set(ids)) != len(ids):
            raise SchemaError(f"image {self.image_id}: duplicate instance id")
        declared = set(ids)
        seen = set()
        for p in self.pairs:
            for i in (p.a, p.b):
                if i not in declared:
                    raise GraphError(f"image {self.image_id}: pair references unknown instance {i}")
            key = (min(p.a, p.b), max(p.a, p.b))
            if key in seen:
                raise SchemaError(f"image {self.image_id}: duplicate pair {key}")
            seen.add(key)

    def instance(self, instance_id: int) -> InstanceRef:
        for inst in self.instances:
            if inst.instance_id == instance_id:
                return inst
        raise KeyError(instance_id)

    def pair_map(self) -> dict[tuple[int, int], PairOrder]:
        out = {}
        for p in self.pairs:
            p = canonicalize(p)
            out[p.key] = p
        return out


@dataclass(frozen=True)
class OrderGraph:
    """Directed views of one image's orders.

    Occlusion edges run occluder -> occludee. Depth edges run closer -> farther;
    equal and overlap-mutual relations contribute an edge in each direction.
    """

    nodes: tuple[int, ...]
    occlusion_edges: tuple[tuple[int, int], ...] = ()
    depth_edges: tuple[tuple[int, int, EdgeTag], ...] = field(default=())

    def __post_init__(self):
        nodes = set(self.nodes)
        for u, v in self.occlusion_edges:
            if u not in nodes or v not in nodes:
                raise GraphError(f"occlusion edge {u}->{v} has an endpoint outside the graph")
        for u, v, _ in self.depth_edges:
            if u not in nodes or v not in nodes:
                raise GraphError(f"depth edge {u}->{v} has an endpoint outside the graph")

    def strict_closer_edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, v, tag in self.depth_edges if tag is EdgeTag.STRICT_DISTINCT]


def depth_edge_tag(rel: DepthRelation) -> EdgeTag:
    if rel.range_kind is RangeKind.DISTINCT:
        return EdgeTag.EQUAL if rel.relation is Depth.EQUAL else EdgeTag.STRICT_DISTINCT
    return EdgeTag.OVERLAP_MUTUAL if rel.relation is Depth.EQUAL else EdgeTag.OVERLAP_DIRECTED


def build_order_graph(ann: ImageAnnotation) -> OrderGraph:
    nodes = tuple(sorted(inst.instance_id for inst in ann.instances))
    declared = set(nodes)
    occ: list[tuple[int, int]] = []
    dep: list[tuple[int, int, EdgeTag]] = []
    for p in sorted(ann.pair_map().values(), key=lambda q: q.key):
        if p.a not in declared or p.b not in declared:
            raise GraphError(f"pair ({p.a}, {p.b}) references an undeclared instance")
        if p.occlusion is not None:
            ab, ba = p.occlusion.flags
            if ab:
                occ.append((p.a, p.b))
            if ba:
                occ.append((p.b, p.a))
        if p.depth is not None:
            tag = depth_edge_tag(p.depth)
            if p.depth.relation is Depth.CLOSER:
                dep.append((p.a, p.b, tag))
            elif p.depth.relation is Depth.FARTHER:
                dep.append((p.b, p.a, tag))
            else:
                dep.append((p.a, p.b, tag))
                dep.append((p.b, p.a, tag))
    return OrderGraph(nodes=nodes, occlusion_edges=tuple(occ), depth_edges=tuple(dep))


def _rotate_min_first(cycle: list[int]) -> tuple[int, ...]:
    i = cycle.index(min(cycle))
    return tuple(cycle[i:] + cycle[:i])


def check_depth_consistency(g: OrderGraph) -> list[tuple[int, ...]]:
    """List every elementary cycle among strict distinct closer->farther edges.

    Cycles are rotated to start at their smallest node and returned sorted. An
    empty list means the strict relation is acyclic. Equal and overlap edges are
    ignored; pairwise human labels need not be globally consistent, so this
    reports rather than rejects.
    """
    dg = nx.DiGraph()
    dg.add_nodes_from(g.nodes)
    dg.add_edges_from(g.strict_closer_edges())
    return sorted(_rotate_min_first(list(c)) for c in nx.simple_cycles(dg))


def occlusion_mode_project(rel: OcclusionRelation, mode: OcclusionMode | str) -> OcclusionRelation:
    mode = OcclusionMode(mode)
    if mode is OcclusionMode.WITHOUT_BI and rel is OcclusionRelation.BIDIRECTIONAL:
        raise UnsupportedLabelError("bidirectional occlusion is not a label in without-bi mode")
    return rel


def directed_facts(pairs: Iterable[tuple[tuple[int, int], OcclusionRelation]]) -> set[tuple[int, int]]:
    """Expand canonical ``((a, b), relation)`` items into occluder->occludee facts."""
    facts = set()
    for (a, b), rel in pairs:
        ab, ba = rel.flags
        if ab:
            facts.add((a, b))
        if ba:
            facts.add((b, a))
    return facts
