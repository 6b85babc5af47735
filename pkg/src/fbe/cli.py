"""Command-line surface for dataset stats, encoding, verification, training, and evaluation.

Subcommands: stats, encode-fbe, verify-uniqueness, train, eval-predicate,
eval-reldet. Exit status 0 on success, 1 on validation or verification
failure, 2 on usage errors. Every output file starts with a versioned
header line naming the format, the forgetting factor, the seed, and the
tool version, and no output embeds timestamps, so identical inputs and
flags reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .encoding import class_sequence_key, fbe_encode, verify_uniqueness
from .features import (
    GEOMETRIC_WIDTH,
    geometric_with_background,
    precomputed_with_background,
    relationship_dataset,
)
from .mlp import PredicateClassifier, load_checkpoint, save_checkpoint
from .recall import (
    EvalConfig,
    PREDICATE_CLASSIFICATION,
    RELATIONSHIP_DETECTION,
    build_predictions_detection_task,
    build_predictions_predicate_task,
    load_predictions,
    recall_at_x,
    zero_shot_split,
)
from .vrd import (
    AnnotationSource,
    apply_image_sizes,
    compute_stats,
    load_detections,
    load_image_sizes,
    load_scenes,
    parse_annotations,
    save_scenes,
)

# Published results of the original full-scale pipeline (CNN pair features
# plus a trained detector). That stack is out of scope here, so these values
# are a reference for scoring externally produced prediction files, not a
# target this package reproduces.
REFERENCE_RESULTS = (
    "reference, full-scale pipeline (CNN pair features + trained detector; out of scope here):",
    "  predicate classification Recall@100 (k = 70): 89.39 entire / 96.05 zero-shot",
    "  relationship detection  Recall@100 (k = 70): 28.19 entire / 25.91 zero-shot",
)


def _rho_value(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"--rho must lie in (0, 1), got {value}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonnegative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value <= 0.0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def _header(file_format: str, rho, seed) -> str:
    return f"# {file_format} rho={rho} seed={seed} tool=fbe/{__version__}"


def _add_dataset_arguments(sub: argparse.ArgumentParser) -> None:
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--vrd", metavar="DIR", help="directory with objects.json, predicates.json, annotations_train.json, annotations_test.json")
    group.add_argument("--scenes", metavar="FILE", help="normalized scene file written by stats --write-scenes")


def _load_dataset(args):
    if args.vrd is not None:
        return parse_annotations(AnnotationSource.from_dir(args.vrd))
    return load_scenes(args.scenes)


def cmd_stats(args) -> int:
    train, test, vocabulary = _load_dataset(args)
    stats = compute_stats(train, test, vocabulary)
    print(_header("fbe-stats/1", args.rho, args.seed))
    print(f"train images: {stats.train_images}")
    print(f"test images: {stats.test_images}")
    print(f"object classes: {stats.object_classes}")
    print(f"predicates: {stats.predicates}")
    print(f"triplet instances: {stats.triplet_instances}")
    if stats.triplet_instances_dedup != stats.triplet_instances:
        print(f"triplet instances (dedup): {stats.triplet_instances_dedup}")
    print(f"triplet types: {stats.triplet_types}")
    print(f"zero-shot: {stats.zero_shot_instances} instances / {stats.zero_shot_types} types")
    if args.write_scenes:
        save_scenes(args.write_scenes, train, test, vocabulary, rho=args.rho, seed=args.seed)
        print(f"wrote normalized scenes to {args.write_scenes}")
    return 0


def _split_scenes(args, train, test):
    if args.split == "train":
        return train
    if args.split == "test":
        return test
    return list(train) + list(test)


def cmd_encode_fbe(args) -> int:
    train, test, vocabulary = _load_dataset(args)
    scenes = _split_scenes(args, train, test)
    num_classes = vocabulary.num_object_classes
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(_header("fbe-encodings/1", args.rho, args.seed) + "\n")
        for scene in scenes:
            for triplet in scene.triplets:
                vector = fbe_encode(
                    scene, triplet.subject_index, triplet.object_index, num_classes, args.rho
                )
                values = "\t".join(repr(float(v)) for v in vector)
                handle.write(
                    f"{scene.image_id}\t{triplet.subject_index}\t{triplet.object_index}\t{values}\n"
                )
    return 0


def _format_key(key) -> str:
    marked, background = key
    return f"marked={marked} background={list(background)}"


def cmd_verify_uniqueness(args) -> int:
    train, test, vocabulary = _load_dataset(args)
    num_classes = vocabulary.num_object_classes

    def stream():
        for scene in list(train) + list(test):
            for triplet in scene.triplets:
                key = class_sequence_key(scene, triplet.subject_index, triplet.object_index)
                vector = fbe_encode(
                    scene, triplet.subject_index, triplet.object_index, num_classes, args.rho
                )
                yield key, vector

    collisions = verify_uniqueness(stream(), tolerance=args.tolerance)
    print(_header("fbe-uniqueness/1", args.rho, args.seed))
    print(f"tolerance: {args.tolerance}")
    print(f"collisions: {len(collisions)}")
    for collision in collisions:
        print(
            f"collision: {_format_key(collision.key_a)} vs {_format_key(collision.key_b)} "
            f"max_diff={collision.max_abs_difference!r}"
        )
    return 0 if not collisions else 1


def _feature_setup(args, vocabulary, scenes_needing_features):
    """Build the feature function and describe it for the checkpoint header."""
    num_classes = vocabulary.num_object_classes
    if args.features:
        feature_fn = precomputed_with_background(args.features, num_classes, args.rho)
        return feature_fn, {
            "provider": "file",
            "pair_width": feature_fn.pair_width,
            "num_classes": num_classes,
            "rho": args.rho,
        }
    for scene in scenes_needing_features:
        if scene.triplets and (not scene.image_width or not scene.image_height):
            raise ValueError(
                f"image dimensions missing for {scene.image_id!r}; supply a "
                "--dims sidecar or precomputed --features"
            )
    return geometric_with_background(num_classes, args.rho), {
        "provider": "geometric",
        "pair_width": GEOMETRIC_WIDTH,
        "num_classes": num_classes,
        "rho": args.rho,
    }


def cmd_train(args) -> int:
    train, test, vocabulary = _load_dataset(args)
    if args.dims:
        sizes = load_image_sizes(args.dims)
        train = apply_image_sizes(train, sizes)
    feature_fn, feature_header = _feature_setup(args, None, vocabulary, train)

    features, labels, groups = relationship_dataset(train, feature_fn)
    classifier = PredicateClassifier(
        hidden_layer_sizes=tuple(args.hidden),
        n_classes=vocabulary.num_predicates,
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        n_iterations=args.iterations,
        seed=args.seed,
    )
    classifier.fit(features, labels, groups=groups)
    save_checkpoint(args.out, classifier, extra_header=feature_header)

    log_path = Path(str(args.out) + ".log")
    accuracy = classifier.score(features, labels)
    with open(log_path, "w", encoding="utf-8") as handle:
        handle.write(_header("fbe-train-log/1", args.rho, args.seed) + "\n")
        for iteration, loss in classifier.loss_curve_:
            handle.write(f"iteration {iteration} loss {loss!r}\n")
        handle.write(f"training accuracy: {accuracy:.4f}\n")
    print(f"wrote checkpoint to {args.out} and log to {log_path}")
    print(f"training accuracy: {accuracy:.4f}")
    return 0


def _print_eval_report(args, task, entire, zero_shot_result, has_zero_shot):
    x, k = args.recall_x, args.k
    print(_header("fbe-eval/1", args.rho, args.seed))
    print(f"task: {task}")
    print(
        f"images: {entire.images_evaluated} evaluated, "
        f"{entire.images_skipped} without ground truth"
    )
    label = f"Recall@{x} (k = {k})"
    print(f"{label}: entire set = {100.0 * entire.mean_recall:.2f}")
    if has_zero_shot:
        print(f"{label}: zero-shot subset = {100.0 * zero_shot_result.mean_recall:.2f}")
    else:
        print(f"{label}: zero-shot subset = n/a (no zero-shot triplets)")
    print(f"pooled {label}: entire set = {100.0 * entire.pooled_recall:.2f}")
    if has_zero_shot:
        print(f"pooled {label}: zero-shot subset = {100.0 * zero_shot_result.pooled_recall:.2f}")
    for line in REFERENCE_RESULTS:
        print(line)


def _write_per_image_table(path, args, result):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(_header("fbe-eval-images/1", args.rho, args.seed) + "\n")
        for image_id in sorted(result.per_image):
            entry = result.per_image[image_id]
            handle.write(
                f"{image_id}\t{entry.total}\t{entry.matched}\t{entry.matched / entry.total!r}\n"
            )


def _run_eval(args, parser, task) -> int:
    train, test, vocabulary = _load_dataset(args)
    if args.k > vocabulary.num_predicates:
        parser.error(
            f"--k {args.k} exceeds the predicate vocabulary size {vocabulary.num_predicates}"
        )
    if args.dims:
        sizes = load_image_sizes(args.dims)
        test = apply_image_sizes(test, sizes)
    config = EvalConfig(
        recall_x=args.recall_x, predictions_per_pair=args.k, iou_threshold=args.iou_thresh
    )

    if args.predictions:
        prediction_sets = load_predictions(args.predictions)
    else:
        classifier, header = load_checkpoint(args.checkpoint)
        rho = header.get("rho", args.rho)
        num_classes = header.get("num_classes", vocabulary.num_object_classes)
        if header.get("provider") == "file":
            if not args.features:
                parser.error("checkpoint was trained on precomputed features; pass --features")
            feature_fn = precomputed_with_background(args.features, num_classes, rho)
        else:
            feature_fn = geometric_with_background(num_classes, rho)
        if task == PREDICATE_CLASSIFICATION:
            prediction_sets = build_predictions_predicate_task(classifier, test, feature_fn, config)
        else:
            detections = load_detections(args.detections)
            prediction_sets = build_predictions_detection_task(
                classifier, test, detections, feature_fn, config
            )

    split = zero_shot_split(train, test)
    entire = recall_at_x(config, test, prediction_sets, task)
    has_zero_shot = bool(split.zero_shot_types)
    zero_shot_result = None
    if has_zero_shot:
        zero_shot_result = recall_at_x(
            config, test, prediction_sets, task, restrict_types=split.zero_shot_types
        )
    _print_eval_report(args, task, entire, zero_shot_result, has_zero_shot)
    if args.out:
        _write_per_image_table(args.out, args, entire)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbe",
        description="Fixed-size background encoding, predicate classification, and recall evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"fbe {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def common(sub):
        _add_dataset_arguments(sub)
        sub.add_argument("--rho", type=_rho_value, default=0.9, help="forgetting factor (default 0.9)")
        sub.add_argument("--seed", type=_nonnegative_int, default=0, help="seed for all randomness (default 0)")

    sub = subparsers.add_parser("stats", help="dataset statistics, including the zero-shot split")
    common(sub)
    sub.add_argument("--write-scenes", metavar="FILE", help="also write the normalized scene file")

    sub = subparsers.add_parser("encode-fbe", help="write one background encoding per labeled triplet")
    common(sub)
    sub.add_argument("--out", required=True, help="output encodings file")
    sub.add_argument("--split", choices=("train", "test", "all"), default="all")

    sub = subparsers.add_parser("verify-uniqueness", help="check that distinct class sequences encode distinctly")
    common(sub)
    sub.add_argument("--tolerance", type=_positive_float, default=1e-9, help="max-norm equality tolerance (default 1e-9)")

    sub = subparsers.add_parser("train", help="train the predicate classifier on the train split")
    common(sub)
    sub.add_argument("--out", required=True, help="checkpoint output path (log goes to <out>.log)")
    sub.add_argument("--dims", help="JSON sidecar of image_id -> [width, height]")
    sub.add_argument("--features", help="precomputed pair-feature file replacing geometric features")
    sub.add_argument("--iterations", type=_nonnegative_int, default=20000)
    sub.add_argument("--hidden", type=_positive_int, nargs="+", default=[256, 64], help="hidden layer widths")
    sub.add_argument("--learning-rate", type=_positive_float, default=0.005)
    sub.add_argument("--momentum", type=float, default=0.9)
    sub.add_argument("--weight-decay", type=float, default=0.0005)

    for name, task in (("eval-predicate", PREDICATE_CLASSIFICATION), ("eval-reldet", RELATIONSHIP_DETECTION)):
        sub = subparsers.add_parser(name, help=f"score the {task} task on the test split")
        common(sub)
        sub.add_argument("--checkpoint", help="trained model checkpoint")
        sub.add_argument("--predictions", help="score this prediction file instead of a checkpoint")
        sub.add_argument("--dims", help="JSON sidecar of image_id -> [width, height]")
        sub.add_argument("--features", help="precomputed pair-feature file (for file-trained checkpoints)")
        sub.add_argument("--recall-x", type=_positive_int, default=100, help="recall cutoff X (default 100)")
        sub.add_argument("--k", type=_positive_int, default=70, help="predicate predictions kept per pair (default 70)")
        sub.add_argument("--iou-thresh", type=_positive_float, default=0.5, help="box-match IoU threshold (detection task)")
        sub.add_argument("--out", help="per-image breakdown output file")
        if name == "eval-reldet":
            sub.add_argument("--detections", help="detections file (image_id, class, confidence, box per line)")
        sub.set_defaults(task=task)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "stats":
            return cmd_stats(args)
        if args.command == "encode-fbe":
            return cmd_encode_fbe(args)
        if args.command == "verify-uniqueness":
            return cmd_verify_uniqueness(args)
        if args.command == "train":
            return cmd_train(args)
        if args.command in ("eval-predicate", "eval-reldet"):
            if not args.predictions and not args.checkpoint:
                parser.error(f"{args.command} needs --checkpoint or --predictions")
            if args.command == "eval-reldet" and not args.predictions and not args.detections:
                parser.error("eval-reldet needs --detections when predicting from a checkpoint")
            return _run_eval(args, parser, args.task)
        parser.error(f"unknown command {args.command!r}")
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
