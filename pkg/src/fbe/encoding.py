"""Fixed-size background encoding of a scene's objects for one subject-object pair.

The encoding writes a whole scene into one vector of length L (the object
vocabulary size): the subject's and object's class slots are set to 1, and
every remaining object adds a geometrically decaying weight to its own class
slot, ordered by distance from the center of the subject-object union box.
The vector length never depends on how many objects the scene contains.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .scenes import Scene, box_center, euclidean_distance, union_box

DEFAULT_FORGETTING_FACTOR = 0.9

#: (marked class pair, background class sequence); the canonical identity of
#: what one encoded vector represents.
ClassSequenceKey = tuple[tuple[int, int], tuple[int, ...]]


def _check_pair(scene: Scene, subject_index: int, object_index: int) -> None:
    n = len(scene.objects)
    for name, idx in (("subject", subject_index), ("object", object_index)):
        if not 0 <= idx < n:
            raise ValueError(
                f"{name} index {idx} out of range for scene {scene.image_id!r} "
                f"with {n} objects"
            )
    if subject_index == object_index:
        raise ValueError(f"subject and object are the same instance ({subject_index})")


def order_background(
    scene: Scene, subject_index: int, object_index: int
) -> list[tuple[int, int, float]]:
    """Rank every non-pair object by distance from the pair's union-box center.

    Returns ``(object_index, class_id, distance)`` entries in ascending
    distance. Exact distance ties are broken by class id, then by the
    object's position in the annotation, so the ordering is total and
    reproducible.
    """
    _check_pair(scene, subject_index, object_index)
    anchor = box_center(
        union_box(scene.objects[subject_index].box, scene.objects[object_index].box)
    )
    ranked = [
        (idx, obj.class_id, euclidean_distance(box_center(obj.box), anchor))
        for idx, obj in enumerate(scene.objects)
        if idx != subject_index and idx != object_index
    ]
    ranked.sort(key=lambda entry: (entry[2], entry[1], entry[0]))
    return ranked


def fbe_encode(
    scene: Scene,
    subject_index: int,
    object_index: int,
    num_classes: int,
    forgetting_factor: float = DEFAULT_FORGETTING_FACTOR,
) -> np.ndarray:
    """Encode one subject-object pair's scene context as a length-L vector.

    The subject and object class slots are set to 1 (a shared class yields a
    single 1, not 2). The i-th nearest background object then adds
    ``forgetting_factor ** i`` to its class slot, accumulating when several
    background objects share a class.
    """
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    if not 0.0 < forgetting_factor < 1.0:
        raise ValueError(f"forgetting factor must lie in (0, 1), got {forgetting_factor}")
    _check_pair(scene, subject_index, object_index)

    encoded = np.zeros(num_classes)
    for idx in (subject_index, object_index):
        class_id = scene.objects[idx].class_id
        if class_id >= num_classes:
            raise ValueError(
                f"class id {class_id} outside encoding of {num_classes} classes"
            )
        encoded[class_id] = 1.0
    for rank, (_, class_id, _) in enumerate(order_background(scene, subject_index, object_index), start=1):
        if class_id >= num_classes:
            raise ValueError(
                f"class id {class_id} outside encoding of {num_classes} classes"
            )
        encoded[class_id] += forgetting_factor**rank
    return encoded


def class_sequence_key(scene: Scene, subject_index: int, object_index: int) -> ClassSequenceKey:
    """Canonical identity of what fbe_encode represents for this pair.

    The marked pair is unordered (both orientations produce the same vector,
    since marking sets rather than adds), so it is stored sorted; the
    background classes keep their distance order.
    """
    subject_class = scene.objects[subject_index].class_id
    object_class = scene.objects[object_index].class_id
    marked = (min(subject_class, object_class), max(subject_class, object_class))
    background = tuple(
        class_id for _, class_id, _ in order_background(scene, subject_index, object_index)
    )
    return (marked, background)


def tail_mass(forgetting_factor: float, rank: int) -> float:
    """Total weight available to all background objects beyond ``rank``.

    Equals ``(f / (1 - f)) * f**rank`` for factor f; strictly below
    ``f**rank`` exactly when f < 0.5, which is the regime where no
    combination of later contributions can imitate an earlier one.
    """
    if not 0.0 < forgetting_factor < 1.0:
        raise ValueError(f"forgetting factor must lie in (0, 1), got {forgetting_factor}")
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    return (forgetting_factor / (1.0 - forgetting_factor)) * forgetting_factor**rank


@dataclass(frozen=True)
class KeyCollision:
    """Two distinct class-sequence keys whose vectors are indistinguishable."""

    key_a: ClassSequenceKey
    key_b: ClassSequenceKey
    max_abs_difference: float


def verify_uniqueness(
    encodings: Iterable[tuple[ClassSequenceKey, np.ndarray]],
    tolerance: float = 1e-9,
) -> list[KeyCollision]:
    """Report every pair of distinct keys whose vectors agree within tolerance.

    Repeated keys are expected to repeat their vector and are never reported.
    An empty report means the encoding separated every distinct key present
    in the input. Vectors are bucketed by their above-tolerance support
    before pairwise comparison, which is reliable whenever every individual
    contribution exceeds the tolerance (true for any realistic factor and
    scene size).
    """
    representatives: dict[ClassSequenceKey, np.ndarray] = {}
    for key, vector in encodings:
        representatives.setdefault(key, np.asarray(vector, dtype=np.float64))

    by_support: dict[tuple[int, ...], list[ClassSequenceKey]] = {}
    for key, vector in representatives.items():
        support = tuple(np.flatnonzero(vector > tolerance).tolist())
        by_support.setdefault(support, []).append(key)

    collisions: list[KeyCollision] = []
    for keys in by_support.values():
        if len(keys) < 2:
            continue
        keys.sort()
        stacked = np.stack([representatives[k] for k in keys])
        # Chunked pairwise max-norm comparison; buckets are usually tiny.
        for i in range(len(keys) - 1):
            diffs = np.abs(stacked[i + 1 :] - stacked[i]).max(axis=1)
            for offset in np.flatnonzero(diffs <= tolerance):
                j = i + 1 + int(offset)
                collisions.append(KeyCollision(keys[i], keys[j], float(diffs[offset])))
    collisions.sort(key=lambda c: (c.key_a, c.key_b))
    return collisions


class FbeEncoder(BaseEstimator, TransformerMixin):
    """Transformer turning (scene, subject_index, object_index) pairs into vectors.

    Stateless apart from parameter validation; ``fit`` exists so the encoder
    slots into pipelines and feature unions.

    Parameters
    ----------
    num_classes : int or None
        Object vocabulary size L (the output width). When None it is
        inferred at fit time as one past the largest class id seen, which is
        only safe if the fitted scenes cover the vocabulary.
    forgetting_factor : float
        Geometric decay weight in (0, 1).
    """

    def __init__(self, num_classes=None, forgetting_factor=DEFAULT_FORGETTING_FACTOR):
        self.num_classes = num_classes
        self.forgetting_factor = forgetting_factor

    def fit(self, X: Sequence[tuple[Scene, int, int]], y=None):
        if not 0.0 < self.forgetting_factor < 1.0:
            raise ValueError(
                f"forgetting factor must lie in (0, 1), got {self.forgetting_factor}"
            )
        if self.num_classes is not None:
            if self.num_classes < 1:
                raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
            self.num_classes_ = int(self.num_classes)
        else:
            largest = -1
            for scene, _, _ in X:
                for obj in scene.objects:
                    largest = max(largest, obj.class_id)
            if largest < 0:
                raise ValueError("cannot infer num_classes from scenes with no objects")
            self.num_classes_ = largest + 1
        return self

    def transform(self, X: Sequence[tuple[Scene, int, int]]) -> np.ndarray:
        if not hasattr(self, "num_classes_"):
            raise ValueError("FbeEncoder must be fitted before transform")
        rows = [
            fbe_encode(scene, si, oi, self.num_classes_, self.forgetting_factor)
            for scene, si, oi in X
        ]
        return np.array(rows).reshape(len(rows), self.num_classes_)

    def get_feature_names_out(self, input_features=None):
        return np.array([f"background_class_{i}" for i in range(self.num_classes_)])
