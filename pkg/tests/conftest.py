import json
import math
import os

import numpy as np
import pytest

from orderkit.rasters import dump_disparity, write_pgm

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def _write(path, data):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode) as fh:
        fh.write(data)
    return str(path)


def _doc(images):
    return json.dumps({"images": images}, indent=2) + "\n"


@pytest.fixture(scope="session")
def fixtures(tmp_path_factory):
    """Small annotation, raster and vote files used by the CLI tests."""
    root = tmp_path_factory.mktemp("fixtures")
    f = {}
    gt_images = [
        {
            "image_id": 1,
            "instances": [{"id": 1, "class": "person", "area": 900, "bottom_row": 5},
                          {"id": 2, "class": "horse", "area": 700, "bottom_row": 3}],
            "occlusion": [{"order": "1<2", "count": 2}],
            "depth": [{"order": "1<2", "count": 2, "overlap": False}],
        },
        {
            "image_id": 2,
            "instances": [{"id": 3, "area": 640, "bottom_row": 2}, {"id": 4, "area": 800, "bottom_row": 4},
                          {"id": 5, "area": 100, "bottom_row": 3}],
            "occlusion": [{"order": "3<4 & 4<3", "count": 3}, {"order": "3|5", "count": 2}],
            "depth": [{"order": "3=4", "count": 4, "overlap": False}],
        },
    ]
    f["gt"] = _write(root / "gt.json", _doc(gt_images))
    pred_images = json.loads(json.dumps(gt_images))
    pred_images[1]["depth"] = [{"order": "4<3", "overlap": False}]
    for img in pred_images:
        for e in img["occlusion"] + img["depth"]:
            e.pop("count", None)
    f["pred"] = _write(root / "pred.json", _doc(pred_images))
    f["pred_occ_partial"] = _write(
        root / "pred_partial.json",
        _doc([dict(pred_images[0]), dict(pred_images[1], occlusion=[{"order": "3<4"}, {"order": "3|5"}])]),
    )
    f["empty"] = _write(root / "empty.json", _doc([]))
    bad = json.loads(json.dumps(gt_images))
    bad[0]["occlusion"][0]["count"] = 1
    f["count1"] = _write(root / "count1.json", _doc(bad))
    f["cyclic"] = _write(
        root / "cyclic.json",
        _doc([{
            "image_id": 9,
            "instances": [{"id": 1}, {"id": 2}, {"id": 3}],
            "occlusion": [],
            "depth": [{"order": "1<2", "count": 2, "overlap": False}, {"order": "2<3", "count": 2, "overlap": False},
                      {"order": "3<1", "count": 3, "overlap": False}],
        }]),
    )
    f["broken"] = _write(root / "broken.json", '{"images": [')
    f["missing"] = str(root / "does-not-exist.json")

    # rasters: image 1 has instance 1 on the left (near, high disparity) and 2 on the right
    rast = root / "rasters"
    m1 = np.zeros((6, 6), bool)
    m1[2:6, 0:3] = True
    m2 = np.zeros((6, 6), bool)
    m2[0:4, 3:6] = True
    disp = np.where(m1, 0.8, 0.2)
    _write(rast / "1" / "1.pgm", write_pgm(m1))
    _write(rast / "1" / "2.pgm", write_pgm(m2))
    _write(rast / "1" / "disparity.pfm", dump_disparity(disp))
    m3 = np.zeros((4, 4), bool)
    m3[0:2] = True
    m4 = np.zeros((4, 4), bool)
    m4[2:4] = True
    _write(rast / "2" / "3.pgm", write_pgm(m3))
    _write(rast / "2" / "4.pgm", write_pgm(m4))
    _write(rast / "2" / "5.pgm", write_pgm(np.eye(4, dtype=bool)))
    _write(rast / "2" / "disparity.pfm", dump_disparity(np.where(m3, 0.5, 0.5)))
    f["rasters"] = str(rast)
    f["mask1"] = str(rast / "1" / "1.pgm")
    f["mask2"] = str(rast / "1" / "2.pgm")
    f["disp1"] = str(rast / "1" / "disparity.pfm")

    gt_depth = np.linspace(1.0, 4.0, 12).reshape(3, 4)
    f["depth_gt"] = _write(root / "depth_gt.pfm", dump_disparity(gt_depth))
    f["depth_pred2"] = _write(root / "depth_pred2.pfm", dump_disparity(2 * gt_depth))
    f["smooth_disp"] = _write(root / "smooth.pfm", dump_disparity(np.array([[0.0, 1.0]])))
    flat = np.zeros((1, 2), np.uint8)
    f["plane0"] = _write(root / "plane0.pgm", write_pgm(flat))
    f["queries"] = _write(
        root / "queries.json",
        json.dumps({"queries": [
            {"p1": [0, 0], "p2": [0, 3], "relation": "farther"},
            {"p1": [2, 3], "p2": [0, 0], "relation": "closer"},
            {"p1": [1, 1], "p2": [1, 2], "relation": "equal"},
        ]}),
    )
    f["votes"] = _write(root / "votes.txt", "a b a\n\n# comment\nx x\nred green blue green\n")
    f["votes_bad"] = _write(root / "votes_bad.txt", "a b c\na a\n")
    f["root"] = str(root)
    assert math.isclose(gt_depth[0, 0], 1.0)
    return f


# -- acceptance summary: one line per criterion ---------------------------------------

_ACCEPTANCE = {}
_ACCEPTANCE_DOCS = {}


def pytest_collection_modifyitems(items):
    for item in items:
        if item.module.__name__.endswith("test_acceptance"):
            doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
            _ACCEPTANCE_DOCS[item.nodeid] = doc


def pytest_runtest_logreport(report):
    if report.nodeid not in _ACCEPTANCE_DOCS:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        if report.skipped:
            outcome = "SKIP"
        else:
            outcome = "PASS" if report.passed else "FAIL"
        _ACCEPTANCE[report.nodeid] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, doc in _ACCEPTANCE_DOCS.items():
        if nodeid in _ACCEPTANCE:
            terminalreporter.write_line(f"[{_ACCEPTANCE[nodeid]}] {doc}")
