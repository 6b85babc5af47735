"""Domain types for annotated scenes, plus the bounding-box geometry they share."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates, origin at the image top-left.

    Coordinates are continuous; zero-width and zero-height boxes are legal.
    Boxes are never clipped to image bounds, since annotation files routinely
    contain boxes that overflow the image.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"box coordinate {name} must be finite, got {value!r}")
        if self.x_min > self.x_max:
            raise ValueError(f"box has x_min={self.x_min} > x_max={self.x_max}")
        if self.y_min > self.y_max:
            raise ValueError(f"box has y_min={self.y_min} > y_max={self.y_max}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def box_center(box: BoundingBox) -> tuple[float, float]:
    """Center point of a box."""
    return ((box.x_min + box.x_max) / 2.0, (box.y_min + box.y_max) / 2.0)


def union_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    """Smallest box covering both inputs."""
    return BoundingBox(
        x_min=min(a.x_min, b.x_min),
        y_min=min(a.y_min, b.y_min),
        x_max=max(a.x_max, b.x_max),
        y_max=max(a.y_max, b.y_max),
    )


def euclidean_distance(p: tuple[float, float], q: tuple[float, float]) -> float:
    """Euclidean distance between two points."""
    return math.hypot(p[0] - q[0], p[1] - q[1])


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes.

    Computed on continuous areas. Disjoint boxes score 0, and a pair whose
    union has zero area (two degenerate boxes) is defined to score 0.
    """
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    intersection = ix * iy
    union = a.area() + b.area() - intersection
    if union <= 0.0:
        return 0.0
    return intersection / union


@dataclass(frozen=True)
class Vocabulary:
    """Ordered class-name lists; a name's position is its integer id."""

    object_classes: tuple[str, ...]
    predicate_classes: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "object_classes", tuple(self.object_classes))
        object.__setattr__(self, "predicate_classes", tuple(self.predicate_classes))
        if not self.object_classes:
            raise ValueError("vocabulary has no object classes")
        if not self.predicate_classes:
            raise ValueError("vocabulary has no predicate classes")
        if len(set(self.object_classes)) != len(self.object_classes):
            raise ValueError("duplicate object class names")
        if len(set(self.predicate_classes)) != len(self.predicate_classes):
            raise ValueError("duplicate predicate names")

    @property
    def num_object_classes(self) -> int:
        return len(self.object_classes)

    @property
    def num_predicates(self) -> int:
        return len(self.predicate_classes)


@dataclass(frozen=True)
class ObjectInstance:
    """One annotated object: a class id and its box."""

    class_id: int
    box: BoundingBox

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"negative class id {self.class_id}")


@dataclass(frozen=True)
class RelationshipTriplet:
    """Directed subject-predicate-object fact over a scene's object list."""

    subject_index: int
    predicate_id: int
    object_index: int

    def __post_init__(self):
        if self.subject_index == self.object_index:
            raise ValueError(f"triplet relates object {self.subject_index} to itself")
        if min(self.subject_index, self.object_index) < 0:
            raise ValueError("negative object index in triplet")
        if self.predicate_id < 0:
            raise ValueError(f"negative predicate id {self.predicate_id}")


@dataclass(frozen=True)
class Scene:
    """One image's annotated objects and relationship triplets.

    Image dimensions are optional; they are only needed by geometry-derived
    features, not by the encodings themselves.
    """

    image_id: str
    objects: tuple[ObjectInstance, ...] = ()
    triplets: tuple[RelationshipTriplet, ...] = ()
    image_width: float | None = None
    image_height: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "triplets", tuple(self.triplets))
        n = len(self.objects)
        for t in self.triplets:
            if t.subject_index >= n or t.object_index >= n:
                raise ValueError(
                    f"scene {self.image_id!r} has {n} objects but a triplet "
                    f"references ({t.subject_index}, {t.object_index})"
                )


def validate_scene(scene: Scene, vocabulary: Vocabulary) -> None:
    """Check that every class and predicate id fits the vocabulary."""
    for i, obj in enumerate(scene.objects):
        if obj.class_id >= vocabulary.num_object_classes:
            raise ValueError(
                f"scene {scene.image_id!r} object {i}: class id {obj.class_id} "
                f"outside vocabulary of size {vocabulary.num_object_classes}"
            )
    for i, t in enumerate(scene.triplets):
        if t.predicate_id >= vocabulary.num_predicates:
            raise ValueError(
                f"scene {scene.image_id!r} triplet {i}: predicate id {t.predicate_id} "
                f"outside vocabulary of size {vocabulary.num_predicates}"
            )
