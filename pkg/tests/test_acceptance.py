"""Exit criteria for the package, one test per criterion."""

import itertools
import json
import os
import random
import time

import numpy as np
import pytest

from helpers import OCC, OCC_NO_BI, random_dataset
from oracles import disparity_loss_loops, occlusion_prf_bruteforce
from orderkit.annotation_io import adapt_release, dataset_from_obj, parse_dataset, parse_order_token, serialize_dataset
from orderkit.errors import AggregationError, ParseError
from orderkit.losses import instance_disparity_loss, smoothness_loss
from orderkit.metrics import Category, depth_map_metrics, occlusion_prf, whdr
from orderkit.model import Depth, DepthRelation, ImageAnnotation, InstanceRef, OcclusionRelation, PairOrder, RangeKind
from orderkit.stats import aggregate_votes, conditional_tables, dataset_statistics
from orderkit.annotation_io import DatasetFile


def test_occlusion_prf_matches_enumerator():
    """Occlusion P/R/F1 equals a directed-fact enumerator on 1,000 random images per mode, under 10 s."""
    rng = random.Random(2024)
    start = time.perf_counter()
    for mode, labels in (("with-bi", OCC), ("without-bi", OCC_NO_BI)):
        for _ in range(1000):
            n = rng.randint(2, 8)
            keys = list(itertools.combinations(range(n), 2))
            keys = rng.sample(keys, rng.randint(1, len(keys)))
            gt = {k: rng.choice(labels) for k in keys}
            pred = {k: rng.choice(labels) for k in keys}
            r = occlusion_prf(gt, pred, mode)
            assert (r.recall, r.precision, r.f1) == occlusion_prf_bruteforce(gt, pred)
    assert time.perf_counter() - start < 10


def _whdr_gt(rng, n):
    gt, pred = {}, {}
    for i in range(n):
        rel = DepthRelation(rng.choice(list(Depth)), rng.choice(list(RangeKind)))
        gt[(i, i + 1)] = (rel, rng.randint(2, 8))
        pred[(i, i + 1)] = rng.choice(list(Depth))
    return gt, pred


def test_whdr_fixtures_and_bracketing():
    """WHDR: 1/3 hand case and 0/1 extremes exact; all-category WHDR bracketed by distinct/overlap on 1,000 datasets."""
    gt = {(0, 1): (DepthRelation(Depth.CLOSER), 2), (2, 3): (DepthRelation(Depth.EQUAL), 4)}
    assert whdr(gt, {(0, 1): Depth.CLOSER, (2, 3): Depth.FARTHER}) == 1 / 3
    assert whdr(gt, {(0, 1): Depth.CLOSER, (2, 3): Depth.EQUAL}) == 0
    assert whdr(gt, {(0, 1): Depth.FARTHER, (2, 3): Depth.CLOSER}) == 1
    rng = random.Random(7)
    checked = 0
    while checked < 1000:
        gt, pred = _whdr_gt(rng, rng.randint(2, 12))
        kinds = {rel.range_kind for rel, _ in gt.values()}
        if len(kinds) < 2:
            continue
        d = whdr(gt, pred, Category.DISTINCT)
        o = whdr(gt, pred, Category.OVERLAP)
        a = whdr(gt, pred, Category.ALL)
        assert min(d, o) - 1e-15 <= a <= max(d, o) + 1e-15
        checked += 1


def test_disparity_metrics():
    """Dense metrics: identity exact, 2x unscaled abs_rel 1 +- 1e-12 with zero deltas, scaled errors < 1e-9, 200 scale trials."""
    rng = np.random.default_rng(11)
    gt = rng.uniform(0.5, 80, (16, 16))
    r = depth_map_metrics(gt, gt.copy())
    assert (r.abs_rel, r.sq_rel, r.rmse_log, r.delta1, r.delta2, r.delta3) == (0, 0, 0, 1, 1, 1)
    r = depth_map_metrics(gt, 2 * gt)
    assert abs(r.abs_rel - 1) <= 1e-12 and (r.delta1, r.delta2, r.delta3) == (0, 0, 0)
    r = depth_map_metrics(gt, 2 * gt, scale=True)
    assert max(r.abs_rel, r.sq_rel, r.rmse_log) < 1e-9
    for _ in range(200):
        h, w = rng.integers(2, 20, 2)
        g = rng.uniform(0.1, 50, (h, w))
        p = g * rng.uniform(0.5, 2, (h, w))
        valid = rng.random((h, w)) < 0.8
        valid[0, 0] = True
        k = float(np.exp(rng.uniform(-6, 6)))
        base = depth_map_metrics(g, p, valid, scale=True)
        scaled = depth_map_metrics(g, k * p, valid, scale=True)
        for name in ("abs_rel", "sq_rel", "rmse_log", "delta1", "delta2", "delta3"):
            x, y = getattr(base, name), getattr(scaled, name)
            assert abs(x - y) <= 1e-9 * max(abs(x), abs(y), 1e-300) or abs(x - y) < 1e-15


def test_disparity_loss_properties():
    """Disparity-order loss: tagged examples exact; antisymmetry, scale invariance and loop agreement on 500 fixtures."""
    for a_vals, b_vals, want in (([0.8, 0.9], [0.1, 0.2], 0.0), ([0.1, 0.2], [0.8, 0.9], 0.5), ([0.5], [0.5], 0.5)):
        disp = np.array([a_vals + b_vals])
        a = np.zeros(disp.shape, bool)
        a[0, : len(a_vals)] = True
        assert instance_disparity_loss(disp, a, ~a, 1) == want
    rng = np.random.default_rng(12)
    for _ in range(500):
        h, w = rng.integers(1, 33, 2)
        w = max(w, 2)
        labels = rng.integers(0, 3, (h, w))
        labels.flat[0], labels.flat[1] = 1, 2
        a, b = labels == 1, labels == 2
        disp = rng.integers(-8, 9, (h, w)).astype(float)
        d = int(rng.choice([1, -1]))
        loss = instance_disparity_loss(disp, a, b, d)
        assert loss == disparity_loss_loops(disp.tolist(), np.argwhere(a).tolist(), np.argwhere(b).tolist(), d)
        assert loss == instance_disparity_loss(disp, b, a, -d)
        assert loss == instance_disparity_loss(disp * float(rng.uniform(0.001, 1000)), a, b, d)


def test_smoothness_loss():
    """Smoothness: constant disparity 0; 1.0 and 0.5 hand cases to 1e-12; shift invariance on 200 grids."""
    rng = np.random.default_rng(13)
    assert smoothness_loss(np.full((4, 4), 3.0), rng.random((3, 4, 4))) == 0
    disp = np.array([[0.0, 1.0]])
    assert abs(smoothness_loss(disp, np.zeros((3, 1, 2))) - 1.0) <= 1e-12
    img = np.zeros((3, 1, 2))
    img[1, 0, 1] = np.log(2)
    assert abs(smoothness_loss(disp, img) - 0.5) <= 1e-12
    for _ in range(200):
        h, w = rng.integers(2, 24, 2)
        disp = rng.normal(size=(h, w))
        img = rng.random((3, h, w))
        base = smoothness_loss(disp, img)
        assert smoothness_loss(disp + rng.uniform(-100, 100), img) == pytest.approx(base, rel=1e-9, abs=1e-12)


def test_parser():
    """Parser: round trip on 1,000 datasets; four grammar examples; malformed tokens rejected with positions."""
    rng = random.Random(99)
    for _ in range(1000):
        d = random_dataset(rng, max_images=4, max_instances=6)
        assert parse_dataset(serialize_dataset(d)) == d
    assert parse_order_token("occlusion", "1<2") == (1, 2, OcclusionRelation.A_OCCLUDES_B)
    assert parse_order_token("occlusion", "1<2 & 2<1") == (1, 2, OcclusionRelation.BIDIRECTIONAL)
    assert parse_order_token("depth", "3=7") == (3, 7, Depth.EQUAL)
    for kind, text, offset in (("occlusion", "1<1", 2), ("occlusion", "1<2 & 3<1", 6), ("depth", "1<2x", 3)):
        with pytest.raises(ParseError) as info:
            parse_order_token(kind, text)
        assert info.value.offset == offset


def test_aggregation_exhaustive():
    """Aggregation: stopping rule verified on every vote stream of length <= 5 over 3 labels."""
    for length in range(6):
        for votes in itertools.product("abc", repeat=length):
            first = None
            for n in range(2, length + 1):
                reps = [x for x in "abc" if votes[:n].count(x) == 2]
                if reps:
                    first = (reps[0], n)
                    break
            if first is None:
                with pytest.raises(AggregationError):
                    aggregate_votes(votes)
            else:
                assert aggregate_votes(votes) == first


def test_conditional_tables():
    """Conditional tables column-stochastic to 1e-9 on random datasets; degenerate fixture gives P(None|Closer) = 1."""
    rng = random.Random(5)
    for _ in range(500):
        for table in conditional_tables(random_dataset(rng, max_images=5, max_instances=7)):
            for c, total in enumerate(table.column_totals):
                if total:
                    assert abs(sum(row[c] for row in table.matrix) - 1) <= 1e-9
    img = ImageAnnotation(
        1,
        tuple(InstanceRef(i) for i in range(3)),
        (PairOrder(0, 1, OcclusionRelation.NONE, 2, DepthRelation(Depth.CLOSER), 2),
         PairOrder(1, 2, OcclusionRelation.NONE, 3, DepthRelation(Depth.CLOSER), 2)),
    )
    occ_given_depth, _ = conditional_tables(DatasetFile((img,)))
    assert occ_given_depth.get("none", "closer") == 1


RELEASE = os.environ.get("ORDERKIT_RELEASE_JSON")


@pytest.mark.skipif(not RELEASE, reason="set ORDERKIT_RELEASE_JSON to the released annotation file(s)")
def test_release_integration():
    """Released data (optional): totals, P(No occ | A->B) = 0.83 +- 0.01, distinct/overlap shares."""
    images, inferred = [], []
    for path in RELEASE.split(os.pathsep):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        images += dataset_from_obj(adapt_release(doc), require_counts=False).images
        inferred += dataset_from_obj(adapt_release(doc, infer_no_occlusion=True), require_counts=False).images
    s = dataset_statistics(DatasetFile(tuple(images)))
    assert (s.n_images, s.n_instances, s.n_orders) == (100_623, 503_939, 2_859_919)
    occ_given_depth, _ = conditional_tables(DatasetFile(tuple(inferred)))
    assert abs(occ_given_depth.get("none", "closer") - 0.83) <= 0.01
    distinct = s.depth_types["distinct-strict"] + s.depth_types["distinct-equal"]
    overlap = s.depth_types["overlap-directed"] + s.depth_types["overlap-mutual"]
    assert abs(distinct - 0.729) <= 0.005 and abs(overlap - 0.262) <= 0.005


def test_cli_golden_files(capsys, fixtures):
    """CLI: every subcommand byte-identical to its golden file across two runs and across thread counts."""
    from test_cli import CASES, _golden, _run

    for name, argv, code, threaded in CASES:
        runs = [argv, argv] + ([argv + ["--jobs", "1"], argv + ["--jobs", "4"]] if threaded else [])
        for run in runs:
            got_code, out, _ = _run(capsys, fixtures, run)
            assert got_code == code, name
            assert out == _golden(name), name
