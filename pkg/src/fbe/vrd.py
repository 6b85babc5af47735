"""Ingest of the public VRD annotation layout and the normalized scene format.

The raw layout is a JSON map from image filename to relationship records;
each record inlines its subject and object as (category id, box given as
[y_min, y_max, x_min, x_max] integers). Parsing rewrites boxes to
(x_min, y_min, x_max, y_max), unifies objects that repeat across records of
the same image by exact (category, box) equality, and keeps duplicate
relationship records as data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .recall import Detection, zero_shot_split
from .scenes import (
    BoundingBox,
    ObjectInstance,
    RelationshipTriplet,
    Scene,
    Vocabulary,
    validate_scene,
)


class AnnotationError(ValueError):
    """Malformed or out-of-vocabulary annotation content."""


@dataclass(frozen=True)
class AnnotationSource:
    """Paths to the four files of a VRD-layout dataset."""

    objects_path: Path
    predicates_path: Path
    train_path: Path
    test_path: Path

    @classmethod
    def from_dir(cls, directory) -> "AnnotationSource":
        directory = Path(directory)
        return cls(
            objects_path=directory / "objects.json",
            predicates_path=directory / "predicates.json",
            train_path=directory / "annotations_train.json",
            test_path=directory / "annotations_test.json",
        )


def _load_json(path: Path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise AnnotationError(f"{path}: {exc}") from exc


def _parse_participant(record, field: str, image_id: str, index: int):
    """(class id, box) from a subject or object sub-record."""
    try:
        sub = record[field]
        category = int(sub["category"])
        raw_box = sub["bbox"]
        if len(raw_box) != 4:
            raise ValueError(f"bbox has {len(raw_box)} entries")
        y_min, y_max, x_min, x_max = (float(v) for v in raw_box)
        box = BoundingBox(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)
    except (KeyError, TypeError, ValueError) as exc:
        raise AnnotationError(f"image {image_id!r} record {index}: {exc}") from exc
    return category, box


def parse_split(annotations: dict, vocabulary: Vocabulary) -> list[Scene]:
    """Scenes from one split's filename-to-records map, in file order."""
    scenes = []
    for image_id, records in annotations.items():
        object_index: dict[tuple[int, tuple], int] = {}
        objects: list[ObjectInstance] = []
        triplets: list[RelationshipTriplet] = []

        def intern(category: int, box: BoundingBox) -> int:
            key = (category, box.as_tuple())
            if key not in object_index:
                object_index[key] = len(objects)
                objects.append(ObjectInstance(category, box))
            return object_index[key]

        for index, record in enumerate(records):
            subject_class, subject_box = _parse_participant(record, "subject", image_id, index)
            object_class, object_box = _parse_participant(record, "object", image_id, index)
            try:
                predicate = int(record["predicate"])
            except (KeyError, TypeError, ValueError) as exc:
                raise AnnotationError(f"image {image_id!r} record {index}: {exc}") from exc
            subject_idx = intern(subject_class, subject_box)
            object_idx = intern(object_class, object_box)
            try:
                triplets.append(RelationshipTriplet(subject_idx, predicate, object_idx))
            except ValueError as exc:
                raise AnnotationError(f"image {image_id!r} record {index}: {exc}") from exc

        scene = Scene(image_id=image_id, objects=tuple(objects), triplets=tuple(triplets))
        try:
            validate_scene(scene, vocabulary)
        except ValueError as exc:
            raise AnnotationError(str(exc)) from exc
        scenes.append(scene)
    return scenes


def parse_annotations(source: AnnotationSource):
    """Parse a whole dataset into (train scenes, test scenes, vocabulary)."""
    object_classes = _load_json(source.objects_path)
    predicate_classes = _load_json(source.predicates_path)
    if not isinstance(object_classes, list) or not isinstance(predicate_classes, list):
        raise AnnotationError("class list files must contain JSON arrays of names")
    vocabulary = Vocabulary(tuple(object_classes), tuple(predicate_classes))
    train = parse_split(_load_json(source.train_path), vocabulary)
    test = parse_split(_load_json(source.test_path), vocabulary)
    return train, test, vocabulary


@dataclass(frozen=True)
class DatasetStats:
    """Counts reproducing the dataset's headline numbers."""

    train_images: int
    test_images: int
    object_classes: int
    predicates: int
    triplet_instances: int
    triplet_instances_dedup: int
    triplet_types: int
    zero_shot_instances: int
    zero_shot_types: int


def compute_stats(
    train: Sequence[Scene], test: Sequence[Scene], vocabulary: Vocabulary
) -> DatasetStats:
    """Dataset statistics over both splits.

    ``triplet_instances`` counts annotation records as parsed (duplicates
    included); the dedup variant counts distinct (subject, predicate,
    object) records per image so any divergence is visible rather than
    silently folded away.
    """
    instances = 0
    dedup = 0
    types = set()
    for scene in list(train) + list(test):
        seen_records = set()
        for t in scene.triplets:
            subject = scene.objects[t.subject_index]
            obj = scene.objects[t.object_index]
            instances += 1
            record = (
                subject.class_id,
                subject.box.as_tuple(),
                t.predicate_id,
                obj.class_id,
                obj.box.as_tuple(),
            )
            seen_records.add(record)
            types.add((subject.class_id, t.predicate_id, obj.class_id))
        dedup += len(seen_records)
    split = zero_shot_split(train, test)
    return DatasetStats(
        train_images=len(train),
        test_images=len(test),
        object_classes=vocabulary.num_object_classes,
        predicates=vocabulary.num_predicates,
        triplet_instances=instances,
        triplet_instances_dedup=dedup,
        triplet_types=len(types),
        zero_shot_instances=split.zero_shot_instances,
        zero_shot_types=len(split.zero_shot_types),
    )


SCENES_FORMAT = "fbe-scenes/1"


def _scene_to_plain(scene: Scene) -> dict:
    return {
        "image_id": scene.image_id,
        "image_width": scene.image_width,
        "image_height": scene.image_height,
        "objects": [[o.class_id, *o.box.as_tuple()] for o in scene.objects],
        "triplets": [[t.subject_index, t.predicate_id, t.object_index] for t in scene.triplets],
    }


def _scene_from_plain(plain: dict) -> Scene:
    return Scene(
        image_id=plain["image_id"],
        objects=tuple(
            ObjectInstance(int(o[0]), BoundingBox(*(float(v) for v in o[1:])))
            for o in plain["objects"]
        ),
        triplets=tuple(
            RelationshipTriplet(int(t[0]), int(t[1]), int(t[2])) for t in plain["triplets"]
        ),
        image_width=plain["image_width"],
        image_height=plain["image_height"],
    )


def save_scenes(path, train, test, vocabulary: Vocabulary, rho=None, seed=None) -> None:
    """Write both splits plus the vocabulary as the normalized scene format."""
    document = {
        "format": SCENES_FORMAT,
        "rho": rho,
        "seed": seed,
        "tool_version": __version__,
        "object_classes": list(vocabulary.object_classes),
        "predicate_classes": list(vocabulary.predicate_classes),
        "train": [_scene_to_plain(s) for s in train],
        "test": [_scene_to_plain(s) for s in test],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle)
        handle.write("\n")


def load_scenes(path):
    """Read a normalized scene file back into (train, test, vocabulary)."""
    with open(path, "r", encoding="utf-8") as handle:
        document = json.load(handle)
    if document.get("format") != SCENES_FORMAT:
        raise AnnotationError(f"{path}: not a {SCENES_FORMAT} file")
    vocabulary = Vocabulary(
        tuple(document["object_classes"]), tuple(document["predicate_classes"])
    )
    train = [_scene_from_plain(p) for p in document["train"]]
    test = [_scene_from_plain(p) for p in document["test"]]
    return train, test, vocabulary


def load_image_sizes(path) -> dict[str, tuple[float, float]]:
    """Sidecar table image_id -> (width, height), stored as a JSON object."""
    with open(path, "r", encoding="utf-8") as handle:
        raw = json.load(handle)
    sizes = {}
    for image_id, pair in raw.items():
        width, height = (float(v) for v in pair)
        if width <= 0 or height <= 0:
            raise ValueError(f"{path}: non-positive dimensions for {image_id!r}")
        sizes[image_id] = (width, height)
    return sizes


def apply_image_sizes(scenes: Sequence[Scene], sizes: dict[str, tuple[float, float]]):
    """Copy of the scenes with dimensions filled in where the table has them."""
    updated = []
    for scene in scenes:
        if scene.image_id in sizes:
            width, height = sizes[scene.image_id]
            updated.append(
                Scene(scene.image_id, scene.objects, scene.triplets, width, height)
            )
        else:
            updated.append(scene)
    return updated


DETECTIONS_FORMAT = "fbe-detections/1"


def save_detections(path, detections: dict[str, Sequence[Detection]]) -> None:
    """Write per-image detections as whitespace-separated text."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"# {DETECTIONS_FORMAT}\n")
        for image_id, found in detections.items():
            for d in found:
                handle.write(
                    f"{image_id}\t{d.class_id}\t{d.confidence!r}\t"
                    + "\t".join(repr(v) for v in d.box.as_tuple())
                    + "\n"
                )


def load_detections(path) -> dict[str, list[Detection]]:
    """Read a detections file: image_id, class id, confidence, box per line."""
    detections: dict[str, list[Detection]] = {}
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline()
        if DETECTIONS_FORMAT not in header:
            raise ValueError(f"{path}: not a {DETECTIONS_FORMAT} file")
        for line_number, line in enumerate(handle, start=2):
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 7:
                raise ValueError(f"{path}:{line_number}: expected 7 fields, got {len(fields)}")
            image_id = fields[0]
            detections.setdefault(image_id, []).append(
                Detection(
                    class_id=int(fields[1]),
                    confidence=float(fields[2]),
                    box=BoundingBox(*(float(v) for v in fields[3:7])),
                )
            )
    return detections
