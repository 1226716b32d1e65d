"""Evaluation metrics for occlusion orders, depth orders and dense disparity maps."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from orderkit.errors import MetricError
from orderkit.model import Depth, DepthRelation, OcclusionMode, OcclusionRelation, RangeKind, occlusion_mode_project
from orderkit.rasters import as_bool_mask

DELTA_THRESHOLDS = (1.25, 1.25**2, 1.25**3)


class Category(enum.Enum):
    DISTINCT = "distinct"
    OVERLAP = "overlap"
    ALL = "all"

    def admits(self, kind: RangeKind) -> bool:
        return self is Category.ALL or self.value == kind.value


# -- occlusion ------------------------------------------------------------------------


@dataclass(frozen=True)
class OcclusionPRF:
    recall: float
    precision: float
    f1: float

    def as_dict(self) -> dict:
        return {"recall": self.recall, "precision": self.precision, "f1": self.f1}


@dataclass(frozen=True)
class OcclusionCounts:
    """Integer sufficient statistics; add these across images, then call :meth:`prf`."""

    hits: int = 0
    n_gt: int = 0
    n_pred: int = 0

    def __add__(self, other: "OcclusionCounts") -> "OcclusionCounts":
        return OcclusionCounts(self.hits + other.hits, self.n_gt + other.n_gt, self.n_pred + other.n_pred)

    def prf(self) -> OcclusionPRF:
        if self.n_gt == 0:
            recall = 1.0 if self.n_pred == 0 else 0.0
        else:
            recall = self.hits / self.n_gt
        precision = self.hits / self.n_pred if self.n_pred else (1.0 if self.n_gt == 0 else 0.0)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return OcclusionPRF(recall, precision, f1)


def occlusion_facts(relations: Mapping[tuple[int, int], OcclusionRelation]) -> set[tuple[int, int]]:
    facts = set()
    for (a, b), rel in relations.items():
        ab, ba = rel.flags
        if ab:
            facts.add((a, b))
        if ba:
            facts.add((b, a))
    return facts


def filter_for_mode(
    gt: Mapping[tuple[int, int], OcclusionRelation],
    pred: Mapping[tuple[int, int], OcclusionRelation],
    mode: OcclusionMode | str,
):
    """Drop pairs whose ground truth is bidirectional when evaluating without-bi."""
    if OcclusionMode(mode) is OcclusionMode.WITH_BI:
        return dict(gt), dict(pred)
    keep = [k for k, rel in gt.items() if rel is not OcclusionRelation.BIDIRECTIONAL]
    return {k: gt[k] for k in keep}, {k: pred[k] for k in keep if k in pred}


def occlusion_counts(
    gt: Mapping[tuple[int, int], OcclusionRelation],
    pred: Mapping[tuple[int, int], OcclusionRelation],
    mode: OcclusionMode | str = OcclusionMode.WITH_BI,
) -> OcclusionCounts:
    if set(gt) != set(pred):
        missing = sorted(set(gt) ^ set(pred))
        raise MetricError(f"ground truth and prediction cover different pairs, e.g. {missing[0]}")
    for rel in list(gt.values()) + list(pred.values()):
        occlusion_mode_project(rel, mode)
    g = occlusion_facts(gt)
    p = occlusion_facts(pred)
    return OcclusionCounts(len(g & p), len(g), len(p))


def occlusion_prf(
    gt: Mapping[tuple[int, int], OcclusionRelation],
    pred: Mapping[tuple[int, int], OcclusionRelation],
    mode: OcclusionMode | str = OcclusionMode.WITH_BI,
) -> OcclusionPRF:
    """Recall, precision and F1 over directed occluder->occludee facts.

    Both mappings are keyed by canonical pair ``(a, b)`` with ``a < b`` and must
    cover the same pairs. A bidirectional relation contributes two facts. In
    without-bi mode, bidirectional labels raise; drop them first with
    :func:`filter_for_mode`.

    With no ground-truth facts, recall is 1 if nothing was predicted and 0
    otherwise; an empty prediction has precision 0 unless the ground truth is
    empty too, in which case it is 1; F1 is 0 when P + R = 0.
    """
    return occlusion_counts(gt, pred, mode).prf()


# -- WHDR -----------------------------------------------------------------------------


def weight_from_count(count: int) -> float:
    """Annotation confidence ``2 / count`` (2 is the minimum number of workers)."""
    return float(count_weight(count))


def count_weight(count: int) -> Fraction:
    if isinstance(count, bool) or int(count) != count or count < 2:
        raise MetricError(f"count must be an integer >= 2, got {count!r}")
    return Fraction(2, int(count))


@dataclass(frozen=True)
class WhdrAccumulator:
    """Exact running sums of weighted disagreement and total weight."""

    weighted_errors: Fraction = Fraction(0)
    total_weight: Fraction = Fraction(0)

    def __add__(self, other: "WhdrAccumulator") -> "WhdrAccumulator":
        return WhdrAccumulator(
            self.weighted_errors + other.weighted_errors, self.total_weight + other.total_weight
        )

    @property
    def empty(self) -> bool:
        return self.total_weight == 0

    def value(self) -> float:
        if self.total_weight == 0:
            raise MetricError("WHDR is undefined: no pairs in the selected category")
        return float(self.weighted_errors / self.total_weight)


def whdr_accumulate(
    gt: Mapping[tuple[int, int], tuple[DepthRelation, int]],
    pred: Mapping[tuple[int, int], Depth | DepthRelation],
    category: Category | str = Category.ALL,
) -> WhdrAccumulator:
    category = Category(category)
    err = Fraction(0)
    tot = Fraction(0)
    for key, (rel, count) in gt.items():
        if not category.admits(rel.range_kind):
            continue
        if key not in pred:
            raise MetricError(f"no prediction for pair {key}")
        p = pred[key]
        p = p.relation if isinstance(p, DepthRelation) else p
        w = count_weight(count)
        tot += w
        if p is not rel.relation:
            err += w
    return WhdrAccumulator(err, tot)


def whdr(
    gt: Mapping[tuple[int, int], tuple[DepthRelation, int]],
    pred: Mapping[tuple[int, int], Depth | DepthRelation],
    category: Category | str = Category.ALL,
) -> float:
    """Weighted human disagreement rate.

    ``gt`` maps each canonical pair to its (relation, count); each pair is
    weighted by ``2 / count``. Only pairs whose ground-truth range kind matches
    ``category`` are scored; ``"all"`` scores every pair. Predictions are
    compared on closer/equal/farther only.
    """
    return whdr_accumulate(gt, pred, category).value()


# -- dense maps -----------------------------------------------------------------------


@dataclass(frozen=True)
class DepthMapReport:
    abs_rel: float
    sq_rel: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float

    def as_dict(self) -> dict:
        return {
            "abs_rel": self.abs_rel,
            "sq_rel": self.sq_rel,
            "rmse_log": self.rmse_log,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "delta3": self.delta3,
        }


def _valid(valid, shape) -> np.ndarray:
    if valid is None:
        return np.ones(shape, dtype=bool)
    v = as_bool_mask(valid)
    if v.shape != shape:
        raise MetricError(f"valid mask shape {v.shape} does not match map shape {shape}")
    return v


def median_scale(pred, gt, valid=None) -> np.ndarray:
    """Rescale ``pred`` so its median over ``valid`` equals that of ``gt``."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    v = _valid(valid, gt.shape)
    if not v.any():
        raise MetricError("median scaling needs at least one valid pixel")
    med_pred = np.median(pred[v])
    if med_pred == 0:
        raise MetricError("cannot median-scale a prediction whose median is zero")
    return pred * (np.median(gt[v]) / med_pred)


def depth_map_metrics(gt, pred, valid=None, scale: bool = False) -> DepthMapReport:
    """Abs Rel, Sq Rel, RMSE log and threshold accuracies over the valid pixels.

    With ``valid=None`` every pixel counts. ``scale`` applies per-image median
    scaling before evaluating.
    """
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    v = _valid(valid, gt.shape)
    if not v.any():
        raise MetricError("no valid pixels")
    if scale:
        pred = median_scale(pred, gt, v)
    d = gt[v]
    p = pred[v]
    if np.any(d <= 0) or np.any(p <= 0):
        raise MetricError("ground truth and prediction must be positive on valid pixels")
    diff = p - d
    abs_rel = float(np.mean(np.abs(diff) / d))
    sq_rel = float(np.mean(diff**2 / d))
    rmse_log = float(np.sqrt(np.mean((np.log(p) - np.log(d)) ** 2)))
    ratio = np.maximum(p / d, d / p)
    deltas = [float(np.mean(ratio < t)) for t in DELTA_THRESHOLDS]
    return DepthMapReport(abs_rel, sq_rel, rmse_log, *deltas)


# -- point pairs ----------------------------------------------------------------------


def relation_from_disparity(d1: float, d2: float) -> Depth:
    # higher disparity means nearer
    if d1 > d2:
        return Depth.CLOSER
    if d1 < d2:
        return Depth.FARTHER
    return Depth.EQUAL


@dataclass(frozen=True)
class PointPairResult:
    n_correct: int
    n_wrong: int
    whdr: float

    def as_dict(self) -> dict:
        return {"n_correct": self.n_correct, "n_wrong": self.n_wrong, "whdr": self.whdr}


def point_pair_eval(
    disparity,
    queries: Iterable[tuple[Sequence[int], Sequence[int], Depth]],
) -> PointPairResult:
    """Score point-pair depth queries ``(p1, p2, relation-of-p1-to-p2)`` with unit weights."""
    disp = np.asarray(disparity, dtype=np.float64)
    h, w = disp.shape
    correct = wrong = 0
    for p1, p2, rel in queries:
        for r, c in (p1, p2):
            if not (0 <= r < h and 0 <= c < w):
                raise MetricError(f"point ({r}, {c}) outside {h}x{w} map")
        got = relation_from_disparity(disp[p1[0], p1[1]], disp[p2[0], p2[1]])
        if got is Depth(rel):
            correct += 1
        else:
            wrong += 1
    total = correct + wrong
    if total == 0:
        raise MetricError("no queries")
    return PointPairResult(correct, wrong, float(Fraction(wrong, total)))


def whdr_report(accumulators: Mapping[str, WhdrAccumulator]) -> dict[str, Optional[float]]:
    return {k: (None if acc.empty else acc.value()) for k, acc in accumulators.items()}
