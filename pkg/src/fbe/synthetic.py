"""Synthetic scene generator with a class-planted background signal.

Generates rider/feeder style scenes where the subject and object boxes are
drawn from one distribution regardless of the predicate, and the predicate
is revealed only by which marker class appears among the background
objects. Geometry of the pair alone is therefore uninformative, while any
encoding of background classes separates the predicates. Useful for
ablations and as a quick end-to-end fixture.
"""

from __future__ import annotations

import numpy as np

from .scenes import BoundingBox, ObjectInstance, RelationshipTriplet, Scene, Vocabulary

PLANTED_VOCABULARY = Vocabulary(
    object_classes=("person", "horse", "barrier", "fodder", "tree", "rock"),
    predicate_classes=("riding", "feeding"),
)

_SUBJECT, _OBJECT = 0, 1
_MARKERS = {0: 2, 1: 3}  # predicate id -> background class that betrays it
_CLUTTER = (4, 5)

_IMAGE_SIDE = 1000.0


def _random_box(rng: np.random.Generator) -> BoundingBox:
    x = rng.uniform(0, _IMAGE_SIDE - 200)
    y = rng.uniform(0, _IMAGE_SIDE - 200)
    w = rng.uniform(40, 200)
    h = rng.uniform(40, 200)
    return BoundingBox(x, y, x + w, y + h)


def make_planted_scenes(num_scenes: int, seed: int, clutter_range=(2, 4)):
    """Scenes whose predicate is recoverable only from background classes.

    Returns ``(scenes, vocabulary)``. Every scene holds one labeled triplet
    between a fixed subject class and object class; the marker object for
    the true predicate is planted among random clutter.
    """
    if num_scenes < 1:
        raise ValueError(f"num_scenes must be >= 1, got {num_scenes}")
    rng = np.random.default_rng(seed)
    low, high = clutter_range
    scenes = []
    for index in range(num_scenes):
        predicate = int(rng.integers(0, 2))
        objects = [
            ObjectInstance(_SUBJECT, _random_box(rng)),
            ObjectInstance(_OBJECT, _random_box(rng)),
            ObjectInstance(_MARKERS[predicate], _random_box(rng)),
        ]
        for _ in range(int(rng.integers(low, high + 1))):
            objects.append(ObjectInstance(int(rng.choice(_CLUTTER)), _random_box(rng)))
        scenes.append(
            Scene(
                image_id=f"planted-{seed}-{index}",
                objects=tuple(objects),
                triplets=(RelationshipTriplet(0, predicate, 1),),
                image_width=_IMAGE_SIDE,
                image_height=_IMAGE_SIDE,
            )
        )
    return scenes, PLANTED_VOCABULARY
