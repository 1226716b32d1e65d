"""Random fixtures shared across test modules."""

import itertools
import random

from orderkit.annotation_io import DatasetFile
from orderkit.model import (
    Depth,
    DepthRelation,
    ImageAnnotation,
    InstanceRef,
    OcclusionRelation,
    PairOrder,
    RangeKind,
)

OCC = list(OcclusionRelation)
OCC_NO_BI = [r for r in OcclusionRelation if r is not OcclusionRelation.BIDIRECTIONAL]
DEPTHS = [DepthRelation(r, k) for r in Depth for k in RangeKind]
CLASSES = ["person", "horse", "dog", "car", "chair"]


def random_image(rng: random.Random, image_id: int, max_instances: int = 6, with_counts: bool = True) -> ImageAnnotation:
    n = rng.randint(0, max_instances)
    ids = sorted(rng.sample(range(0, 40), n))
    instances = []
    for i in ids:
        instances.append(
            InstanceRef(
                instance_id=i,
                image_id=image_id,
                class_label=rng.choice(CLASSES + [None]),
                bbox_area_px=rng.choice([None, rng.randint(1, 5000)]),
                bottom_row=rng.choice([None, rng.randint(0, 480)]),
            )
        )
    pairs = []
    for a, b in itertools.combinations(ids, 2):
        has_occ = rng.random() < 0.7
        has_dep = rng.random() < 0.7
        if not (has_occ or has_dep):
            continue
        pairs.append(
            PairOrder(
                a,
                b,
                occlusion=rng.choice(OCC) if has_occ else None,
                occlusion_count=(rng.randint(2, 6) if with_counts else None) if has_occ else None,
                depth=rng.choice(DEPTHS) if has_dep else None,
                depth_count=(rng.randint(2, 6) if with_counts else None) if has_dep else None,
            )
        )
    return ImageAnnotation(image_id=image_id, instances=tuple(instances), pairs=tuple(pairs))


def random_dataset(rng: random.Random, max_images: int = 4, **kw) -> DatasetFile:
    ids = sorted(rng.sample(range(0, 10_000), rng.randint(0, max_images)))
    return DatasetFile(images=tuple(random_image(rng, i, **kw) for i in ids))


def raw_doc(images):
    return {"images": images}


def one_image_doc(occlusion=(), depth=(), instances=(1, 2), image_id=1):
    return {
        "images": [
            {
                "image_id": image_id,
                "instances": [{"id": i} for i in instances],
                "occlusion": list(occlusion),
                "depth": list(depth),
            }
        ]
    }
