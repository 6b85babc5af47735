"""Per-pair feature vectors and their concatenation with background encodings.

The classifier input for a subject-object pair is ``[pair features,
background encoding]``. Pair features come from a provider: either the
built-in geometric descriptor (needs image dimensions, no pixels) or a file
of precomputed vectors keyed by (image id, subject index, object index), so
externally produced embeddings can slot in without code changes.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .encoding import DEFAULT_FORGETTING_FACTOR, fbe_encode
from .scenes import Scene, box_center, iou, union_box

GEOMETRIC_WIDTH = 14

# Guards log-ratios against zero-width or zero-height boxes.
RATIO_EPSILON = 1e-6


def geometric_pair_features(scene: Scene, subject_index: int, object_index: int) -> np.ndarray:
    """Geometry-only descriptor of a subject-object pair, width 14.

    Layout: subject box normalized by image size (4), object box likewise
    (4), log width ratio and log height ratio of subject to object (2),
    object-center offset from subject center normalized by image size (2),
    pair IoU (1), union-box area as a fraction of the image (1). All entries
    are invariant to jointly rescaling the boxes and the image dimensions.
    """
    if not scene.image_width or not scene.image_height:
        raise ValueError(
            f"scene {scene.image_id!r} has no image dimensions; geometric "
            "features need them for normalization"
        )
    if scene.image_width <= 0 or scene.image_height <= 0:
        raise ValueError(f"scene {scene.image_id!r} has non-positive image dimensions")
    n = len(scene.objects)
    for name, idx in (("subject", subject_index), ("object", object_index)):
        if not 0 <= idx < n:
            raise ValueError(f"{name} index {idx} out of range for {n} objects")
    if subject_index == object_index:
        raise ValueError(f"subject and object are the same instance ({subject_index})")

    w, h = scene.image_width, scene.image_height
    sbox = scene.objects[subject_index].box
    obox = scene.objects[object_index].box

    # Ratios use image-normalized extents so the epsilon guard does not
    # break scale invariance.
    log_width_ratio = math.log((sbox.width / w + RATIO_EPSILON) / (obox.width / w + RATIO_EPSILON))
    log_height_ratio = math.log((sbox.height / h + RATIO_EPSILON) / (obox.height / h + RATIO_EPSILON))
    scx, scy = box_center(sbox)
    ocx, ocy = box_center(obox)

    return np.array(
        [
            sbox.x_min / w, sbox.y_min / h, sbox.x_max / w, sbox.y_max / h,
            obox.x_min / w, obox.y_min / h, obox.x_max / w, obox.y_max / h,
            log_width_ratio,
            log_height_ratio,
            (ocx - scx) / w,
            (ocy - scy) / h,
            iou(sbox, obox),
            union_box(sbox, obox).area() / (w * h),
        ]
    )


FEATURE_FILE_FORMAT = "fbe-features/1"


def save_feature_file(path, width: int, records) -> None:
    """Write precomputed pair features as tab-separated text.

    ``records`` yields ``(image_id, subject_index, object_index, vector)``.
    Image ids must not contain tabs or newlines.
    """
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"# {FEATURE_FILE_FORMAT} width={width}\n")
        for image_id, subject_index, object_index, vector in records:
            if "\t" in image_id or "\n" in image_id:
                raise ValueError(f"image id {image_id!r} contains tab or newline")
            values = "\t".join(repr(float(v)) for v in vector)
            handle.write(f"{image_id}\t{subject_index}\t{object_index}\t{values}\n")


def load_feature_file(path):
    """Load a precomputed-feature file into ``(width, {(id, s, o): vector})``."""
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n")
        parts = header.split()
        if len(parts) < 3 or parts[0] != "#" or parts[1] != FEATURE_FILE_FORMAT:
            raise ValueError(f"{path}: not a {FEATURE_FILE_FORMAT} file (header {header!r})")
        try:
            width = int(parts[2].removeprefix("width="))
        except ValueError:
            raise ValueError(f"{path}: malformed width in header {header!r}") from None
        if width < 1:
            raise ValueError(f"{path}: declared width must be >= 1, got {width}")
        records: dict[tuple[str, int, int], np.ndarray] = {}
        for line_number, line in enumerate(handle, start=2):
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3 + width:
                raise ValueError(
                    f"{path}:{line_number}: expected width {width}, "
                    f"got {len(fields) - 3} values"
                )
            key = (fields[0], int(fields[1]), int(fields[2]))
            records[key] = np.array([float(v) for v in fields[3:]])
    return width, records


def lookup_feature(store, width: int, image_id: str, subject_index: int, object_index: int) -> np.ndarray:
    """Fetch one stored pair vector, failing loudly on absent keys."""
    key = (image_id, subject_index, object_index)
    if key not in store:
        raise KeyError(f"no precomputed features for {key}")
    vector = store[key]
    if vector.shape != (width,):
        raise ValueError(
            f"stored vector for {key} has width {vector.shape[0]}, expected {width}"
        )
    return vector


class GeometricPairFeatures(BaseEstimator, TransformerMixin):
    """Transformer over (scene, subject_index, object_index) pairs, width 14."""

    def fit(self, X=None, y=None):
        self.width_ = GEOMETRIC_WIDTH
        return self

    def transform(self, X: Sequence[tuple[Scene, int, int]]) -> np.ndarray:
        rows = [geometric_pair_features(scene, si, oi) for scene, si, oi in X]
        return np.array(rows).reshape(len(rows), GEOMETRIC_WIDTH)

    def get_feature_names_out(self, input_features=None):
        return np.array([f"pair_geometry_{i}" for i in range(GEOMETRIC_WIDTH)])


class PrecomputedPairFeatures(BaseEstimator, TransformerMixin):
    """Transformer serving pair vectors from a feature file.

    The file is read once at fit time; transform is then a pure lookup and
    safe for concurrent use.
    """

    def __init__(self, path=None):
        self.path = path

    def fit(self, X=None, y=None):
        if self.path is None:
            raise ValueError("PrecomputedPairFeatures needs a feature file path")
        self.width_, self.records_ = load_feature_file(self.path)
        return self

    def transform(self, X: Sequence[tuple[Scene, int, int]]) -> np.ndarray:
        rows = [
            lookup_feature(self.records_, self.width_, scene.image_id, si, oi)
            for scene, si, oi in X
        ]
        return np.array(rows).reshape(len(rows), self.width_)


def combine_features(
    pair_vector: np.ndarray,
    background_vector: np.ndarray,
    pair_width: int | None = None,
    num_classes: int | None = None,
) -> np.ndarray:
    """Concatenate pair features with a background encoding, no rescaling.

    Widths are checked against the declared provider width and vocabulary
    size when given.
    """
    pair_vector = np.asarray(pair_vector, dtype=np.float64)
    background_vector = np.asarray(background_vector, dtype=np.float64)
    if pair_vector.ndim != 1 or background_vector.ndim != 1:
        raise ValueError("combine_features expects 1-d vectors")
    if pair_width is not None and pair_vector.shape[0] != pair_width:
        raise ValueError(
            f"pair vector has width {pair_vector.shape[0]}, expected {pair_width}"
        )
    if num_classes is not None and background_vector.shape[0] != num_classes:
        raise ValueError(
            f"background vector has width {background_vector.shape[0]}, "
            f"expected {num_classes}"
        )
    return np.concatenate([pair_vector, background_vector])


def geometric_with_background(num_classes: int, forgetting_factor: float = DEFAULT_FORGETTING_FACTOR):
    """Feature function: geometric pair descriptor followed by the encoding."""

    def compute(scene: Scene, subject_index: int, object_index: int) -> np.ndarray:
        return combine_features(
            geometric_pair_features(scene, subject_index, object_index),
            fbe_encode(scene, subject_index, object_index, num_classes, forgetting_factor),
        )

    return compute


def precomputed_with_background(
    path, num_classes: int, forgetting_factor: float = DEFAULT_FORGETTING_FACTOR
):
    """Feature function backed by a precomputed pair-feature file."""
    width, records = load_feature_file(path)

    def compute(scene: Scene, subject_index: int, object_index: int) -> np.ndarray:
        pair = lookup_feature(records, width, scene.image_id, subject_index, object_index)
        return combine_features(
            pair,
            fbe_encode(scene, subject_index, object_index, num_classes, forgetting_factor),
        )

    compute.pair_width = width
    return compute


def relationship_dataset(scenes, feature_fn):
    """Assemble (features, labels, image ids) from every labeled triplet.

    Rows follow scene order, then triplet order within each scene, so the
    result is deterministic for a fixed scene list.
    """
    rows, labels, groups = [], [], []
    for scene in scenes:
        for triplet in scene.triplets:
            rows.append(feature_fn(scene, triplet.subject_index, triplet.object_index))
            labels.append(triplet.predicate_id)
            groups.append(scene.image_id)
    if not rows:
        raise ValueError("no labeled triplets in the given scenes")
    return np.array(rows), np.array(labels, dtype=np.int64), groups
