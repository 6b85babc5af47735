"""From-scratch feedforward predicate classifier with SGD momentum training.

Kept dependency-free beyond numpy so the gradients can be verified exactly
against finite differences and training stays bit-reproducible for a given
seed and dataset order.
"""

from __future__ import annotations

import json
import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import __version__

CHECKPOINT_FORMAT = "fbe-checkpoint/1"


def init_params(layer_widths, seed: int):
    """Seeded uniform Glorot weights, zero biases, for the given width chain."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_widths[:-1], layer_widths[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward_stages(weights, biases, features):
    """Hidden activations plus final logits; features is (n, input_width)."""
    activations = [features]
    for w, b in zip(weights[:-1], biases[:-1]):
        activations.append(np.maximum(activations[-1] @ w + b, 0.0))
    logits = activations[-1] @ weights[-1] + biases[-1]
    return activations, logits


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(weights, biases, features) -> np.ndarray:
    """Class probabilities, shape (n, num_classes); rows sum to 1."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != weights[0].shape[0]:
        raise ValueError(
            f"features must be (n, {weights[0].shape[0]}), got {features.shape}"
        )
    _, logits = _forward_stages(weights, biases, features)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite activation in forward pass")
    return np.exp(_log_softmax(logits))


def loss_and_gradient(weights, biases, features, labels, weight_decay: float = 0.0):
    """Mean cross-entropy plus L2 penalty on weights, with exact gradients.

    The penalty is ``weight_decay / 2`` times the squared norm of every
    weight matrix; biases are not decayed. Returns
    ``(loss, weight_grads, bias_grads)`` with gradients shaped like the
    parameters.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("batch must be a non-empty (n, width) array")
    num_classes = weights[-1].shape[1]
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )

    activations, logits = _forward_stages(weights, biases, features)
    log_probs = _log_softmax(logits)
    n = features.shape[0]
    loss = -log_probs[np.arange(n), labels].mean()
    loss += 0.5 * weight_decay * sum(float((w**2).sum()) for w in weights)

    delta = np.exp(log_probs)
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    weight_grads = [None] * len(weights)
    bias_grads = [None] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        weight_grads[layer] = activations[layer].T @ delta + weight_decay * weights[layer]
        bias_grads[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (activations[layer] > 0.0)
    return loss, weight_grads, bias_grads


def topk_from_probs(probs: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Top-k (class id, probability) pairs, descending; ties favor lower ids."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    probs = np.asarray(probs, dtype=np.float64)
    order = np.lexsort((np.arange(probs.shape[0]), -probs))
    return [(int(i), float(probs[i])) for i in order[: min(k, probs.shape[0])]]


class PredicateClassifier(BaseEstimator, ClassifierMixin):
    """Fully connected softmax classifier trained one image-group per step.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
        Widths of the rectified hidden layers.
    n_classes : int or None
        Output width. When None it is inferred as ``max(y) + 1`` at fit
        time; pass it explicitly when some classes may be absent from the
        training labels.
    learning_rate, momentum, weight_decay : float
        Classic momentum update: velocity <- momentum * velocity -
        learning_rate * gradient; parameters += velocity.
    n_iterations : int
        Number of update steps. Each step consumes the examples of one
        group (image) as a batch, cycling through a seeded shuffle of the
        groups and reshuffling after each full pass.
    seed : int
        Drives initialization and the group shuffles. Identical seed,
        parameters, and dataset order reproduce the model bit for bit.
    """

    def __init__(
        self,
        hidden_layer_sizes=(256, 64),
        n_classes=None,
        learning_rate=0.005,
        momentum=0.9,
        weight_decay=0.0005,
        n_iterations=20000,
        seed=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.n_classes = n_classes
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.n_iterations = n_iterations
        self.seed = seed

    def _validate_hyperparameters(self):
        if any(int(w) < 1 for w in self.hidden_layer_sizes):
            raise ValueError(f"hidden widths must be positive, got {self.hidden_layer_sizes}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.n_iterations < 0:
            raise ValueError(f"iteration count must be >= 0, got {self.n_iterations}")

    def fit(self, X, y, groups=None):
        """Train on features X and predicate labels y.

        ``groups`` assigns each row to an image; rows sharing a group form
        one training batch. With ``groups=None`` the whole dataset is a
        single batch.
        """
        self._validate_hyperparameters()
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if y.shape != (X.shape[0],):
            raise ValueError(f"labels must be shape ({X.shape[0]},), got {y.shape}")
        if X.shape[0] == 0:
            raise ValueError("training set is empty")
        if y.min() < 0:
            raise ValueError("negative label")
        if self.n_classes is not None:
            num_classes = int(self.n_classes)
            if y.max() >= num_classes:
                raise ValueError(f"label {y.max()} outside n_classes={num_classes}")
        else:
            num_classes = int(y.max()) + 1

        if groups is None:
            group_rows = [np.arange(X.shape[0])]
        else:
            if len(groups) != X.shape[0]:
                raise ValueError("groups must align with rows of X")
            first_seen: dict = {}
            for row, g in enumerate(groups):
                first_seen.setdefault(g, []).append(row)
            group_rows = [np.array(rows) for rows in first_seen.values()]

        widths = [X.shape[1], *map(int, self.hidden_layer_sizes), num_classes]
        rng = np.random.default_rng(self.seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        velocity_w = [np.zeros_like(w) for w in weights]
        velocity_b = [np.zeros_like(b) for b in biases]

        schedule = rng.permutation(len(group_rows))
        cursor = 0
        loss_curve = []
        for iteration in range(int(self.n_iterations)):
            if cursor == len(schedule):
                schedule = rng.permutation(len(group_rows))
                cursor = 0
            rows = group_rows[schedule[cursor]]
            cursor += 1
            loss, grad_w, grad_b = loss_and_gradient(
                weights, biases, X[rows], y[rows], self.weight_decay
            )
            for i in range(len(weights)):
                velocity_w[i] = self.momentum * velocity_w[i] - self.learning_rate * grad_w[i]
                velocity_b[i] = self.momentum * velocity_b[i] - self.learning_rate * grad_b[i]
                weights[i] = weights[i] + velocity_w[i]
                biases[i] = biases[i] + velocity_b[i]
            if iteration % 100 == 0 or iteration == int(self.n_iterations) - 1:
                loss_curve.append((iteration, float(loss)))

        self.coefs_ = weights
        self.intercepts_ = biases
        self.classes_ = np.arange(num_classes)
        self.n_features_in_ = X.shape[1]
        self.loss_curve_ = loss_curve
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "coefs_")
        X = check_array(X, dtype=np.float64)
        return forward(self.coefs_, self.intercepts_, X)

    def predict(self, X) -> np.ndarray:
        # argmax takes the first maximum, matching the low-id tie rule.
        return self.predict_proba(X).argmax(axis=1)

    def predict_topk(self, X, k: int) -> list[list[tuple[int, float]]]:
        """Per-row top-k (predicate id, probability), descending probability."""
        probs = self.predict_proba(X)
        return [topk_from_probs(row, k) for row in probs]


def save_checkpoint(path, classifier: PredicateClassifier, extra_header=None) -> None:
    """Write a fitted classifier as a json header line plus raw float64 arrays.

    The byte stream is a pure function of the parameters and header values,
    so identical models produce identical files.
    """
    check_is_fitted(classifier, "coefs_")
    header = {
        "format": CHECKPOINT_FORMAT,
        "tool_version": __version__,
        "layer_widths": [classifier.n_features_in_]
        + [int(w) for w in classifier.hidden_layer_sizes]
        + [int(classifier.classes_.shape[0])],
        "hidden_layer_sizes": [int(w) for w in classifier.hidden_layer_sizes],
        "n_classes": int(classifier.classes_.shape[0]),
        "learning_rate": classifier.learning_rate,
        "momentum": classifier.momentum,
        "weight_decay": classifier.weight_decay,
        "n_iterations": int(classifier.n_iterations),
        "seed": int(classifier.seed),
    }
    if extra_header:
        header.update(extra_header)
    with open(path, "wb") as handle:
        handle.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        handle.write(b"\n")
        for w, b in zip(classifier.coefs_, classifier.intercepts_):
            handle.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            handle.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint back into a fitted classifier plus its header."""
    with open(path, "rb") as handle:
        header = json.loads(handle.readline().decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
        widths = header["layer_widths"]
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            w = np.frombuffer(handle.read(fan_in * fan_out * 8), dtype="<f8")
            if w.shape[0] != fan_in * fan_out:
                raise ValueError(f"{path}: truncated checkpoint")
            weights.append(w.reshape(fan_in, fan_out).copy())
            b = np.frombuffer(handle.read(fan_out * 8), dtype="<f8")
            if b.shape[0] != fan_out:
                raise ValueError(f"{path}: truncated checkpoint")
            biases.append(b.copy())
        if handle.read(1):
            raise ValueError(f"{path}: trailing bytes after parameters")

    classifier = PredicateClassifier(
        hidden_layer_sizes=tuple(header["hidden_layer_sizes"]),
        n_classes=header["n_classes"],
        learning_rate=header["learning_rate"],
        momentum=header["momentum"],
        weight_decay=header["weight_decay"],
        n_iterations=header["n_iterations"],
        seed=header["seed"],
    )
    classifier.coefs_ = weights
    classifier.intercepts_ = biases
    classifier.classes_ = np.arange(header["n_classes"])
    classifier.n_features_in_ = widths[0]
    classifier.loss_curve_ = []
    return classifier, header
