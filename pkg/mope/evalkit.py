"""
Evaluation metrics: image fidelity, classification accuracy, tracking accuracy
(MOTA) from per-frame error counts, and the gate's clean/noisy confusion.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from mope.exceptions import ShapeError
from mope.graph import forward
from mope.networks.classifier import logits as flatten_logits

logger = logging.getLogger(__name__)

TRACKING_COLUMNS = ("frame", "fn", "fp", "id", "g")


def _check_same_shape(a, b, what):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"{what}: shapes {np.shape(a)} and {np.shape(b)} differ")


def mse(a, b):
    _check_same_shape(a, b, "mse")
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.mean(diff * diff))


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    err = mse(a, b)
    if err == 0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / err))


def predict(logits):
    # np.argmax returns the first maximum, so ties resolve to the lowest class index
    return np.argmax(np.asarray(logits), axis=1)


def classification_accuracy(logits, labels):
    labels = np.asarray(labels)
    if np.shape(logits)[0] != labels.shape[0]:
        raise ShapeError(f"classification_accuracy: {np.shape(logits)[0]} logits vs {labels.shape[0]} labels")
    if labels.shape[0] == 0:
        return 0.0
    return float(np.mean(predict(logits) == labels))


def map_batches(fn, images, batch_size=64):
    """Apply `fn` to consecutive chunks of `images` and stack the results."""
    if images.shape[0] == 0:
        return fn(images)
    return np.concatenate([fn(images[start:start + batch_size]) for start in range(0, images.shape[0], batch_size)])


def classifier_logits(model, images, batch_size=64, preprocess=None):
    """Run a classifier Model over `images` in chunks, optionally behind `preprocess`."""
    chunks = []
    for start in range(0, images.shape[0], batch_size):
        batch = images[start:start + batch_size]
        if preprocess is not None:
            batch = preprocess(batch)
        chunks.append(flatten_logits(forward(model.network, model.params, batch)[0]))
    if not chunks:
        return np.zeros((0, model.network.output_channels), dtype=np.float32)
    return np.concatenate(chunks)


def evaluate_classifier(model, images, labels, batch_size=64, preprocess=None):
    return classification_accuracy(classifier_logits(model, images, batch_size, preprocess), labels)


@dataclass(frozen=True)
class TrackingCounts:
    fn: Sequence[int]
    fp: Sequence[int]
    id: Sequence[int]
    g: Sequence[int]

    def __post_init__(self):
        lengths = {len(self.fn), len(self.fp), len(self.id), len(self.g)}
        if len(lengths) != 1:
            raise ValueError("fn, fp, id and g must have one entry per frame")
        for name in ("fn", "fp", "id", "g"):
            if any(value < 0 for value in getattr(self, name)):
                raise ValueError(f"{name} counts must be >= 0")
        if sum(self.g) <= 0:
            raise ValueError("total ground-truth count must be > 0")


def mota(counts):
    """1 - sum(fn + fp + id) / sum(g); unbounded below."""
    errors = sum(counts.fn) + sum(counts.fp) + sum(counts.id)
    return 1.0 - errors / sum(counts.g)


def load_tracking_counts(path):
    """Read a per-frame CSV with header frame,fn,fp,id,g."""
    frame = pd.read_csv(path)
    missing = set(TRACKING_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    frame = frame.sort_values("frame")
    return TrackingCounts(*(frame[column].astype(int).tolist() for column in TRACKING_COLUMNS[1:]))


@dataclass(frozen=True)
class GateReport:
    accuracy: float
    clean_as_clean: int
    clean_as_noisy: int
    noisy_as_clean: int
    noisy_as_noisy: int

    @property
    def total(self):
        return self.clean_as_clean + self.clean_as_noisy + self.noisy_as_clean + self.noisy_as_noisy

    def as_frame(self):
        return pd.DataFrame(
            [[self.clean_as_clean, self.clean_as_noisy], [self.noisy_as_clean, self.noisy_as_noisy]],
            index=pd.Index(["clean", "noisy"], name="truth"),
            columns=["routed_identity", "routed_noisy_expert"],
        )


def gate_report(routed_clean, is_clean):
    """Binary confusion of gate decisions; both arguments are boolean per image.

    `routed_clean` may also be a sequence of GateDecision objects.
    """
    routed = np.array([_routed_clean(d) for d in routed_clean], dtype=bool)
    truth = np.asarray(is_clean, dtype=bool)
    if routed.shape != truth.shape:
        raise ShapeError(f"gate_report: {routed.shape[0]} decisions vs {truth.shape[0]} labels")
    cc = int(np.sum(routed & truth))
    cn = int(np.sum(~routed & truth))
    nc = int(np.sum(routed & ~truth))
    nn = int(np.sum(~routed & ~truth))
    accuracy = (cc + nn) / truth.size if truth.size else 0.0
    return GateReport(accuracy, cc, cn, nc, nn)


def _routed_clean(decision):
    expert = getattr(decision, "chosen_expert", None)
    if expert is None:
        return bool(decision)
    return expert.value == "identity"
