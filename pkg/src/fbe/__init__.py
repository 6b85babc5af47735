"""Fixed-size encoding of scene objects, predicate classification, and recall evaluation."""

__version__ = "0.1.0"

from .scenes import (
    BoundingBox,
    ObjectInstance,
    RelationshipTriplet,
    Scene,
    Vocabulary,
    box_center,
    euclidean_distance,
    iou,
    union_box,
)
from .fofe import fofe_decode_bruteforce, fofe_encode
from .encoding import (
    FbeEncoder,
    class_sequence_key,
    fbe_encode,
    order_background,
    tail_mass,
    verify_uniqueness,
)
from .features import (
    GeometricPairFeatures,
    PrecomputedPairFeatures,
    combine_features,
    geometric_pair_features,
    relationship_dataset,
)
from .mlp import PredicateClassifier, load_checkpoint, save_checkpoint
from .recall import (
    Candidate,
    Detection,
    EvalConfig,
    PredictionSet,
    build_predictions_detection_task,
    build_predictions_predicate_task,
    recall_at_x,
    zero_shot_split,
)
from .vrd import AnnotationSource, compute_stats, parse_annotations

__all__ = [
    "BoundingBox",
    "ObjectInstance",
    "RelationshipTriplet",
    "Scene",
    "Vocabulary",
    "box_center",
    "euclidean_distance",
    "iou",
    "union_box",
    "fofe_encode",
    "fofe_decode_bruteforce",
    "FbeEncoder",
    "class_sequence_key",
    "fbe_encode",
    "order_background",
    "tail_mass",
    "verify_uniqueness",
    "GeometricPairFeatures",
    "PrecomputedPairFeatures",
    "combine_features",
    "geometric_pair_features",
    "relationship_dataset",
    "PredicateClassifier",
    "load_checkpoint",
    "save_checkpoint",
    "Candidate",
    "Detection",
    "EvalConfig",
    "PredictionSet",
    "build_predictions_detection_task",
    "build_predictions_predicate_task",
    "recall_at_x",
    "zero_shot_split",
    "AnnotationSource",
    "compute_stats",
    "parse_annotations",
]
