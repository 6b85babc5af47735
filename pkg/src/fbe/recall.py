"""Recall@X evaluation for predicate classification and relationship detection.

Per image, every candidate triplet is ranked by score, the top X are kept,
and ground-truth triplets are matched one-to-one against them greedily in
rank order. Predicate classification requires exact box identity (boxes are
given), relationship detection accepts boxes with enough overlap. The
headline number is the mean of per-image recall fractions; a pooled variant
(total matches over total ground truth) is also computed for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .mlp import PredicateClassifier, topk_from_probs
from .scenes import BoundingBox, ObjectInstance, Scene, iou

PREDICATE_CLASSIFICATION = "predicate-classification"
RELATIONSHIP_DETECTION = "relationship-detection"

#: (subject class, predicate, object class) identity of a relationship.
TripletType = tuple[int, int, int]


@dataclass(frozen=True)
class Candidate:
    """One scored relationship prediction."""

    subject_box: BoundingBox
    subject_class: int
    object_box: BoundingBox
    object_class: int
    predicate_id: int
    score: float


@dataclass(frozen=True)
class PredictionSet:
    """All candidates predicted for one image."""

    image_id: str
    candidates: tuple[Candidate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        for c in self.candidates:
            if not np.isfinite(c.score):
                raise ValueError(f"non-finite score in predictions for {self.image_id!r}")


@dataclass(frozen=True)
class EvalConfig:
    """Recall cutoff X, per-pair predicate budget k, and the detection IoU bar."""

    recall_x: int = 100
    predictions_per_pair: int = 70
    iou_threshold: float = 0.5

    def __post_init__(self):
        if self.recall_x < 1:
            raise ValueError(f"recall cutoff must be >= 1, got {self.recall_x}")
        if self.predictions_per_pair < 1:
            raise ValueError(
                f"per-pair budget must be >= 1, got {self.predictions_per_pair}"
            )
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError(f"IoU threshold must lie in (0, 1], got {self.iou_threshold}")


@dataclass(frozen=True)
class GroundTruth:
    """A ground-truth relationship in matchable form."""

    subject_box: BoundingBox
    subject_class: int
    object_box: BoundingBox
    object_class: int
    predicate_id: int

    @property
    def triplet_type(self) -> TripletType:
        return (self.subject_class, self.predicate_id, self.object_class)


def ground_truth_records(scene: Scene) -> list[GroundTruth]:
    records = []
    for t in scene.triplets:
        subject = scene.objects[t.subject_index]
        obj = scene.objects[t.object_index]
        records.append(
            GroundTruth(subject.box, subject.class_id, obj.box, obj.class_id, t.predicate_id)
        )
    return records


@dataclass(frozen=True)
class ImageRecall:
    matched: int
    total: int


@dataclass(frozen=True)
class RecallResult:
    """Mean-per-image recall, the pooled variant, and the per-image detail."""

    mean_recall: float
    pooled_recall: float
    per_image: dict[str, ImageRecall]
    images_evaluated: int
    images_skipped: int


def _truncate_per_pair(candidates: Sequence[Candidate], budget: int) -> list[Candidate]:
    """Keep at most ``budget`` predicates per (subject, object) pair."""
    by_pair: dict[tuple, list[Candidate]] = {}
    for c in candidates:
        key = (c.subject_class, c.subject_box.as_tuple(), c.object_class, c.object_box.as_tuple())
        by_pair.setdefault(key, []).append(c)
    kept = []
    for pair_candidates in by_pair.values():
        pair_candidates.sort(key=lambda c: (-c.score, c.predicate_id))
        kept.extend(pair_candidates[:budget])
    return kept


def _rank_order(candidates: Iterable[Candidate]) -> list[Candidate]:
    # Ties beyond the score are broken lexicographically so ranking is total.
    return sorted(
        candidates,
        key=lambda c: (
            -c.score,
            c.subject_class,
            c.predicate_id,
            c.object_class,
            c.subject_box.as_tuple(),
            c.object_box.as_tuple(),
        ),
    )


def _matches(candidate: Candidate, truth: GroundTruth, task: str, iou_threshold: float) -> bool:
    if (
        candidate.subject_class != truth.subject_class
        or candidate.object_class != truth.object_class
        or candidate.predicate_id != truth.predicate_id
    ):
        return False
    if task == PREDICATE_CLASSIFICATION:
        return (
            candidate.subject_box == truth.subject_box
            and candidate.object_box == truth.object_box
        )
    return (
        iou(candidate.subject_box, truth.subject_box) >= iou_threshold
        and iou(candidate.object_box, truth.object_box) >= iou_threshold
    )


def recall_at_x(
    config: EvalConfig,
    scenes: Sequence[Scene],
    prediction_sets: Sequence[PredictionSet],
    task: str,
    restrict_types: frozenset[TripletType] | None = None,
) -> RecallResult:
    """Score predictions against the scenes' ground truth.

    Each image's candidates are first truncated to the per-pair budget
    (defensively, in case the producer already did), ranked, and cut to the
    top X. A ground truth may be claimed by at most one candidate and vice
    versa; candidates claim in rank order, taking the first unclaimed ground
    truth they match. Images whose (possibly restricted) ground truth is
    empty do not contribute to the mean.

    ``restrict_types`` limits the ground truth to the given triplet types,
    which is how zero-shot subsets are scored.
    """
    if task not in (PREDICATE_CLASSIFICATION, RELATIONSHIP_DETECTION):
        raise ValueError(f"unknown task {task!r}")
    scenes_by_id = {scene.image_id: scene for scene in scenes}
    predictions_by_id: dict[str, PredictionSet] = {}
    for ps in prediction_sets:
        if ps.image_id not in scenes_by_id:
            raise ValueError(f"predictions reference unknown image {ps.image_id!r}")
        if ps.image_id in predictions_by_id:
            raise ValueError(f"duplicate prediction set for image {ps.image_id!r}")
        predictions_by_id[ps.image_id] = ps

    per_image: dict[str, ImageRecall] = {}
    fractions = []
    total_matched = 0
    total_truth = 0
    skipped = 0
    for image_id, scene in scenes_by_id.items():
        truths = ground_truth_records(scene)
        if restrict_types is not None:
            truths = [t for t in truths if t.triplet_type in restrict_types]
        if not truths:
            skipped += 1
            continue
        prediction = predictions_by_id.get(image_id)
        candidates: Sequence[Candidate] = prediction.candidates if prediction else ()
        kept = _rank_order(_truncate_per_pair(candidates, config.predictions_per_pair))
        kept = kept[: config.recall_x]

        claimed = [False] * len(truths)
        matched = 0
        for candidate in kept:
            for i, truth in enumerate(truths):
                if claimed[i]:
                    continue
                if _matches(candidate, truth, task, config.iou_threshold):
                    claimed[i] = True
                    matched += 1
                    break
        per_image[image_id] = ImageRecall(matched, len(truths))
        fractions.append(matched / len(truths))
        total_matched += matched
        total_truth += len(truths)

    mean_recall = float(np.mean(fractions)) if fractions else 0.0
    pooled = total_matched / total_truth if total_truth else 0.0
    return RecallResult(mean_recall, pooled, per_image, len(fractions), skipped)


@dataclass(frozen=True)
class ZeroShotSplit:
    """Test triplet instances partitioned by whether their type occurs in training."""

    zero_shot: tuple[tuple[str, TripletType], ...]
    seen: tuple[tuple[str, TripletType], ...]
    zero_shot_types: frozenset[TripletType]
    seen_types: frozenset[TripletType]

    @property
    def zero_shot_instances(self) -> int:
        return len(self.zero_shot)

    @property
    def seen_instances(self) -> int:
        return len(self.seen)


def triplet_types_in(scenes: Iterable[Scene]) -> frozenset[TripletType]:
    types = set()
    for scene in scenes:
        for truth in ground_truth_records(scene):
            types.add(truth.triplet_type)
    return frozenset(types)


def zero_shot_split(train_scenes: Sequence[Scene], test_scenes: Sequence[Scene]) -> ZeroShotSplit:
    """Partition test triplets into types unseen in training versus seen."""
    train_types = triplet_types_in(train_scenes)
    zero_shot: list[tuple[str, TripletType]] = []
    seen: list[tuple[str, TripletType]] = []
    for scene in test_scenes:
        for truth in ground_truth_records(scene):
            entry = (scene.image_id, truth.triplet_type)
            if truth.triplet_type in train_types:
                seen.append(entry)
            else:
                zero_shot.append(entry)
    return ZeroShotSplit(
        zero_shot=tuple(zero_shot),
        seen=tuple(seen),
        zero_shot_types=frozenset(t for _, t in zero_shot),
        seen_types=frozenset(t for _, t in seen),
    )


def ordered_pairs(count: int) -> list[tuple[int, int]]:
    """All ordered pairs of distinct indices below count."""
    return [(i, j) for i in range(count) for j in range(count) if i != j]


def build_predictions_predicate_task(
    classifier: PredicateClassifier,
    scenes: Sequence[Scene],
    feature_fn: Callable[[Scene, int, int], np.ndarray],
    config: EvalConfig,
) -> list[PredictionSet]:
    """Predict the top-k predicates for every ordered ground-truth object pair."""
    sets = []
    for scene in scenes:
        pairs = ordered_pairs(len(scene.objects))
        candidates = []
        if pairs:
            features = np.array([feature_fn(scene, s, o) for s, o in pairs])
            probs = classifier.predict_proba(features)
            for (s, o), row in zip(pairs, probs):
                subject = scene.objects[s]
                obj = scene.objects[o]
                for predicate_id, score in topk_from_probs(row, config.predictions_per_pair):
                    candidates.append(
                        Candidate(subject.box, subject.class_id, obj.box, obj.class_id, predicate_id, score)
                    )
        sets.append(PredictionSet(scene.image_id, tuple(candidates)))
    return sets


@dataclass(frozen=True)
class Detection:
    """One detector output: class, confidence, box."""

    class_id: int
    confidence: float
    box: BoundingBox


def build_predictions_detection_task(
    classifier: PredicateClassifier,
    scenes: Sequence[Scene],
    detections: dict[str, Sequence[Detection]],
    feature_fn: Callable[[Scene, int, int], np.ndarray],
    config: EvalConfig,
) -> list[PredictionSet]:
    """Predict over detected objects only; ground-truth objects are ignored.

    Candidate scores fold in both detection confidences so noisy boxes rank
    below confident ones. Images without detections yield empty sets.
    """
    sets = []
    for scene in scenes:
        found = detections.get(scene.image_id, ())
        detected_scene = Scene(
            image_id=scene.image_id,
            objects=tuple(ObjectInstance(d.class_id, d.box) for d in found),
            triplets=(),
            image_width=scene.image_width,
            image_height=scene.image_height,
        )
        pairs = ordered_pairs(len(found))
        candidates = []
        if pairs:
            features = np.array([feature_fn(detected_scene, s, o) for s, o in pairs])
            probs = classifier.predict_proba(features)
            for (s, o), row in zip(pairs, probs):
                subject, obj = found[s], found[o]
                for predicate_id, score in topk_from_probs(row, config.predictions_per_pair):
                    candidates.append(
                        Candidate(
                            subject.box,
                            subject.class_id,
                            obj.box,
                            obj.class_id,
                            predicate_id,
                            score * subject.confidence * obj.confidence,
                        )
                    )
        sets.append(PredictionSet(scene.image_id, tuple(candidates)))
    return sets


PREDICTIONS_FORMAT = "fbe-predictions/1"


def save_predictions(path, prediction_sets: Sequence[PredictionSet], header_note: str = "") -> None:
    """Write prediction sets as tab-separated text, one candidate per line."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"# {PREDICTIONS_FORMAT}{' ' + header_note if header_note else ''}\n")
        for ps in prediction_sets:
            for c in ps.candidates:
                fields = [
                    ps.image_id,
                    str(c.subject_class),
                    *(repr(v) for v in c.subject_box.as_tuple()),
                    str(c.predicate_id),
                    str(c.object_class),
                    *(repr(v) for v in c.object_box.as_tuple()),
                    repr(c.score),
                ]
                handle.write("\t".join(fields) + "\n")


def load_predictions(path) -> list[PredictionSet]:
    """Read prediction sets written by save_predictions (or by other tools)."""
    by_image: dict[str, list[Candidate]] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline()
        if PREDICTIONS_FORMAT not in header:
            raise ValueError(f"{path}: not a {PREDICTIONS_FORMAT} file")
        for line_number, line in enumerate(handle, start=2):
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 13:
                raise ValueError(f"{path}:{line_number}: expected 13 fields, got {len(fields)}")
            image_id = fields[0]
            candidate = Candidate(
                subject_class=int(fields[1]),
                subject_box=BoundingBox(*(float(v) for v in fields[2:6])),
                predicate_id=int(fields[6]),
                object_class=int(fields[7]),
                object_box=BoundingBox(*(float(v) for v in fields[8:12])),
                score=float(fields[12]),
            )
            if image_id not in by_image:
                by_image[image_id] = []
                order.append(image_id)
            by_image[image_id].append(candidate)
    return [PredictionSet(image_id, tuple(by_image[image_id])) for image_id in order]
