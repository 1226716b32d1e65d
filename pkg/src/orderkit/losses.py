"""Order-aware disparity losses, evaluated as plain numbers (no gradients)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from orderkit.errors import LossError
from orderkit.rasters import as_bool_mask


@dataclass(frozen=True)
class LossWeights:
    """Weights for (occlusion-order CE, depth-order CE, disparity-order loss, smoothness)."""

    occlusion_order: float = 0.0
    depth_order: float = 1.0
    disparity: float = 1.0
    smoothness: float = 0.1

    def __post_init__(self):
        for name in ("occlusion_order", "depth_order", "disparity", "smoothness"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise LossError(f"weight {name} must be finite and non-negative, got {v}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.occlusion_order, self.depth_order, self.disparity, self.smoothness)


# depth-order supervision only, and occlusion + depth supervision
DEPTH_ONLY = LossWeights(0.0, 1.0, 1.0, 0.1)
OCCLUSION_AND_DEPTH = LossWeights(1.0, 1.0, 1.0, 0.1)


def disparity_violations(disp, mask_a, mask_b, order: int) -> tuple[int, int]:
    """Return ``(violations, N)`` for the instance-wise disparity loss.

    Values are compared after multiplying by ``order`` (1 if A is closer, -1 if
    farther), so an A pixel violates when it is not above every B pixel and a B
    pixel violates when it is not below every A pixel. Ties count as violations.
    """
    if order not in (1, -1):
        raise LossError(f"depth order must be 1 (closer) or -1 (farther), got {order!r}")
    disp = np.asarray(disp, dtype=np.float64)
    a = as_bool_mask(mask_a)
    b = as_bool_mask(mask_b)
    if a.shape != disp.shape or b.shape != disp.shape:
        raise LossError("masks and disparity map must share a shape")
    if not a.any() or not b.any():
        raise LossError("both instance masks must be nonempty")
    if (a & b).any():
        raise LossError("instance masks overlap")
    sa = order * disp[a]
    sb = order * disp[b]
    bad_a = int(np.count_nonzero(sa <= sb.max()))
    bad_b = int(np.count_nonzero(sb >= sa.min()))
    return bad_a + bad_b, int(sa.size + sb.size)


def instance_disparity_loss(disp, mask_a, mask_b, order: int) -> float:
    """Fraction of order-violating pixels, normalized by ``2 N`` with N = |A| + |B|.

    Lies in [0, 1/2] and is 0 exactly when the two instances' disparities are
    strictly separated in the annotated direction. Only meaningful for distinct
    pairs; equal depth (order 0) gives no signal and is rejected.
    """
    bad, n = disparity_violations(disp, mask_a, mask_b, order)
    return bad / (2 * n)


def smoothness_loss(disp, image) -> float:
    """Edge-aware smoothness of ``disp`` guided by a 3-channel ``image``.

    ``image`` is shaped (3, H, W) with intensities in [0, 1]. Forward
    differences are taken rightward and downward; the image gradient magnitude
    is the L2 norm over channels. The mean is over all difference terms.
    """
    disp = np.asarray(disp, dtype=np.float64)
    img = np.asarray(image, dtype=np.float64)
    if disp.ndim != 2:
        raise LossError("disparity must be 2-D")
    if img.ndim != 3 or img.shape[0] != 3 or img.shape[1:] != disp.shape:
        raise LossError(f"image must be shaped (3, {disp.shape[0]}, {disp.shape[1]}), got {img.shape}")
    h, w = disp.shape
    n = h * (w - 1) + (h - 1) * w
    if n == 0:
        raise LossError(f"{h}x{w} map has no neighbouring pixels")
    dx = np.abs(np.diff(disp, axis=1))
    dy = np.abs(np.diff(disp, axis=0))
    gx = np.sqrt(np.sum(np.diff(img, axis=2) ** 2, axis=0))
    gy = np.sqrt(np.sum(np.diff(img, axis=1) ** 2, axis=0))
    total = np.sum(dx * np.exp(-gx)) + np.sum(dy * np.exp(-gy))
    return float(total / n)


def combined_objective(loo: float, ldo: float, ldisp: float, ls: float, weights: LossWeights = DEPTH_ONLY) -> float:
    terms = (loo, ldo, ldisp, ls)
    if not all(math.isfinite(t) for t in terms):
        raise LossError("loss terms must be finite")
    return sum(w * t for w, t in zip(weights.as_tuple(), terms))
