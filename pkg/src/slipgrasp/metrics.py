"""Evaluation metrics and object-wise dataset splitting.

Cross-validation folds are built over object identities, never over raw
episodes: every episode of a given object lands in exactly one fold, so a
held-out fold contains only objects the model has never seen.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (DimensionMismatchError, EmptyInputError,
                     TooFewObjectsError)
from .seeding import as_rng


def _check_pair(y_true, y_pred):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise EmptyInputError("no samples to score")
    if y_true.shape != y_pred.shape:
        raise DimensionMismatchError(
            f"labels {y_true.shape} vs predictions {y_pred.shape}")
    return y_true, y_pred


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = _check_pair(y_true, y_pred)
    return float(np.mean(y_true == y_pred))


def confusion_counts(y_true, y_pred, classes) -> np.ndarray:
    """Count matrix; rows are true classes, columns predicted classes."""
    y_true, y_pred = _check_pair(y_true, y_pred)
    classes = list(classes)
    index = {c: i for i, c in enumerate(classes)}
    out = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(y_true.tolist(), y_pred.tolist()):
        if t in index and p in index:
            out[index[t], index[p]] += 1
    return out


def confusion_matrix(y_true, y_pred, classes) -> np.ndarray:
    """Row-normalized confusion matrix; zero-support rows stay all zero."""
    counts = confusion_counts(y_true, y_pred, classes).astype(float)
    support = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, support, out=np.zeros_like(counts),
                     where=support > 0)


def f_score(y_true, y_pred) -> float:
    """Macro F1 over the classes present in the true labels.

    A class with no predicted samples contributes 0, so degenerate
    predictors are penalized rather than skipped.
    """
    y_true, y_pred = _check_pair(y_true, y_pred)
    scores = []
    for c in np.unique(y_true):
        tp = np.sum((y_true == c) & (y_pred == c))
        fp = np.sum((y_true != c) & (y_pred == c))
        fn = np.sum((y_true == c) & (y_pred != c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


@dataclass(frozen=True)
class FoldSplit:
    """Partition of object names into k disjoint folds."""

    folds: tuple

    @property
    def k(self) -> int:
        return len(self.folds)

    def split(self, object_names):
        """Yield (train_indices, test_indices) per fold for episode-level
        object names; every object's episodes stay together."""
        names = np.asarray([str(n) for n in object_names])
        for fold in self.folds:
            test = np.isin(names, list(fold))
            yield np.flatnonzero(~test), np.flatnonzero(test)


def kfold_objectwise(object_names, k: int = 5, seed=0) -> FoldSplit:
    """Shuffle the distinct objects and deal them round-robin into k folds,
    so fold sizes differ by at most one object."""
    unique = sorted({str(n) for n in object_names})
    if len(unique) < k:
        raise TooFewObjectsError(
            f"need at least {k} distinct objects, got {len(unique)}")
    rng = as_rng(seed)
    order = [unique[i] for i in rng.permutation(len(unique))]
    return FoldSplit(folds=tuple(tuple(order[i::k]) for i in range(k)))


def train_val_split(object_names, seed=0, val_fraction: float = 1.0 / 6.0):
    """Object-wise train/validation split, 5:1 by default.

    Returns (train_objects, val_objects) as sorted tuples; at least one
    object on each side.
    """
    unique = sorted({str(n) for n in object_names})
    if len(unique) < 2:
        raise TooFewObjectsError("need at least 2 objects to split")
    rng = as_rng(seed)
    order = [unique[i] for i in rng.permutation(len(unique))]
    n_val = int(round(len(unique) * val_fraction))
    n_val = min(max(n_val, 1), len(unique) - 1)
    return tuple(sorted(order[n_val:])), tuple(sorted(order[:n_val]))
