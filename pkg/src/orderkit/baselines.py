"""Non-learned order predictors: instance area, image-bottom proximity, and disparity statistics."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from orderkit.errors import BaselineError
from orderkit.model import Depth, InstanceRef, OcclusionRelation
from orderkit.rasters import as_bool_mask

OCCLUSION = "occlusion"
DEPTH = "depth"


@dataclass(frozen=True)
class TrimSpec:
    trim_fraction: float = 0.05

    def __post_init__(self):
        if not 0 <= self.trim_fraction < 0.5:
            raise BaselineError(f"trim fraction must lie in [0, 0.5), got {self.trim_fraction}")

    def per_tail(self, n: int) -> int:
        # via the decimal repr so that e.g. 0.29 * 100 floors to 29, not 28
        return int(Fraction(repr(float(self.trim_fraction))) * n)


def _relation(sign: int, target: str):
    if target == OCCLUSION:
        return {1: OcclusionRelation.A_OCCLUDES_B, -1: OcclusionRelation.B_OCCLUDES_A, 0: OcclusionRelation.NONE}[sign]
    if target == DEPTH:
        return Depth(sign)
    raise ValueError(f"target must be 'occlusion' or 'depth', got {target!r}")


def _compare(x, y) -> int:
    return (x > y) - (x < y)


def predict_by_area(inst_a: InstanceRef, inst_b: InstanceRef, target: str = OCCLUSION):
    """The larger instance is taken as occluder (or as closer). Equal areas give no order."""
    if inst_a.bbox_area_px is None or inst_b.bbox_area_px is None:
        raise BaselineError("area baseline needs both instance areas")
    return _relation(_compare(inst_a.bbox_area_px, inst_b.bbox_area_px), target)


def predict_by_yaxis(inst_a: InstanceRef, inst_b: InstanceRef, target: str = OCCLUSION):
    """The instance whose lowest mask pixel sits nearer the image bottom wins."""
    if inst_a.bottom_row is None or inst_b.bottom_row is None:
        raise BaselineError("y-axis baseline needs both bottom rows")
    return _relation(_compare(inst_a.bottom_row, inst_b.bottom_row), target)


def trimmed_values(values, trim: TrimSpec = TrimSpec()) -> np.ndarray:
    vals = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = vals.size
    if n == 0:
        raise BaselineError("empty mask")
    k = trim.per_tail(n)
    if n - 2 * k < 1:
        raise BaselineError(f"trimming {k} values per tail leaves nothing of {n}")
    return vals[k : n - k]


def trimmed_instance_stat(disp, mask, stat: str = "median", trim: TrimSpec = TrimSpec()) -> float:
    """Mean or median of the disparity under ``mask`` after dropping floor(trim * n) values per tail."""
    disp = np.asarray(disp, dtype=np.float64)
    m = as_bool_mask(mask)
    if m.shape != disp.shape:
        raise BaselineError("mask and disparity map must share a shape")
    kept = trimmed_values(disp[m], trim)
    if stat == "mean":
        return float(np.mean(kept))
    if stat == "median":
        return float(np.median(kept))
    raise ValueError(f"stat must be 'mean' or 'median', got {stat!r}")


def predict_depth_from_disparity(
    disp, mask_a, mask_b, stat: str = "median", trim: TrimSpec = TrimSpec(), eq_tol: float = 0.0
) -> Depth:
    """Depth of A relative to B from trimmed instance disparity statistics.

    Equal when ``|sA - sB| <= eq_tol * max(|sA|, |sB|)``; otherwise the
    instance with larger disparity is closer. The default tolerance only
    yields Equal on exact ties.
    """
    if eq_tol < 0:
        raise BaselineError("eq_tol must be non-negative")
    sa = trimmed_instance_stat(disp, mask_a, stat, trim)
    sb = trimmed_instance_stat(disp, mask_b, stat, trim)
    if abs(sa - sb) <= eq_tol * max(abs(sa), abs(sb)):
        return Depth.EQUAL
    return Depth.CLOSER if sa > sb else Depth.FARTHER
