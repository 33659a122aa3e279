"""ML-KNN soft scores and loading of externally produced score matrices."""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import impute_missing
from .errors import DataFormatError, LabelMismatchError


@dataclass(frozen=True, eq=False)
class MLKnnModel:
    """Fitted ML-KNN model (Zhang & Zhou's lazy multi-label k-NN).

    ``cond1[j, t]`` / ``cond0[j, t]`` are the smoothed probabilities of
    seeing ``t`` neighbours carrying label ``j`` given that ``j`` is relevant /
    irrelevant. ``train_neighbors`` are the leave-one-out neighbour sets used to
    estimate them.
    """

    k: int
    s: float
    train_features: np.ndarray = field(repr=False)
    train_labels: np.ndarray = field(repr=False)
    prior1: np.ndarray
    count1: np.ndarray = field(repr=False)
    count0: np.ndarray = field(repr=False)
    cond1: np.ndarray = field(repr=False)
    cond0: np.ndarray = field(repr=False)
    train_neighbors: np.ndarray = field(repr=False)

    @property
    def prior0(self):
        return 1.0 - self.prior1

    @property
    def n_labels(self):
        return self.train_labels.shape[1]

    def posterior(self, tallies):
        """Scores for an M x C matrix of relevant-neighbour counts."""
        tallies = np.asarray(tallies, dtype=np.int64)
        cols = np.arange(self.n_labels)
        p1 = self.prior1 * self.cond1[cols, tallies]
        p0 = self.prior0 * self.cond0[cols, tallies]
        return p1 / (p1 + p0)

    def training_scores(self):
        """Leave-one-out scores of the training instances."""
        return self.posterior(neighbor_tallies(self.train_neighbors, self.train_labels))


def neighbor_tallies(neighbors, labels):
    """Number of neighbours carrying each label: M x C int matrix."""
    return np.asarray(labels, dtype=np.int64)[neighbors].sum(axis=1)


def fit_mlknn(train, k=10, s=1.0, labels=None):
    """Fit ML-KNN on a dataset (or on ``train`` features with explicit ``labels``).

    Neighbours are by Euclidean distance on raw features with the instance
    itself excluded; equal distances go to the lower training index.
    """
    if labels is None:
        features, labels = train.features, train.labels
    else:
        features = train
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int8)
    n, c = labels.shape
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < N (k={k}, N={n})")
    if not s > 0:
        raise ValueError(f"smoothing s must be positive, got {s}")
    if np.isnan(features).any():
        (features,) = impute_missing(features)

    prior1 = (s + labels.sum(axis=0)) / (2 * s + n)
    neighbors = kernels.knn_indices(features, features, k, exclude_self=True)
    tallies = neighbor_tallies(neighbors, labels)
    count1 = np.zeros((c, k + 1), dtype=np.int64)
    count0 = np.zeros((c, k + 1), dtype=np.int64)
    for j in range(c):
        relevant = labels[:, j] == 1
        count1[j] = np.bincount(tallies[relevant, j], minlength=k + 1)
        count0[j] = np.bincount(tallies[~relevant, j], minlength=k + 1)
    cond1 = (s + count1) / (s * (k + 1) + count1.sum(axis=1, keepdims=True))
    cond0 = (s + count0) / (s * (k + 1) + count0.sum(axis=1, keepdims=True))
    return MLKnnModel(k, float(s), features, labels, prior1, count1, count0, cond1, cond0,
                      neighbors)


def predict_scores_mlknn(model, test_features):
    test_features = np.asarray(test_features, dtype=np.float64)
    if test_features.ndim != 2 or test_features.shape[1] != model.train_features.shape[1]:
        raise ValueError(f"test features have shape {test_features.shape}, model expects "
                         f"{model.train_features.shape[1]} columns")
    neighbors = kernels.knn_indices(model.train_features, test_features, model.k)
    return model.posterior(neighbor_tallies(neighbors, model.train_labels))


def load_external_scores(path, expected_c=None, header=False, label_names=None):
    """Read an M x C matrix of soft scores in [0, 1] from CSV.

    With ``header=True`` the first row names the labels; if ``label_names`` is
    also given the two must agree.
    """
    return read_scores(path, expected_c, header, label_names)[0]


def read_scores(path, expected_c=None, header=False, label_names=None):
    """Like :func:`load_external_scores` but returns ``(scores, header_names_or_None)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if row]
    names = None
    if header:
        if not rows:
            raise DataFormatError("missing header row", path)
        names = [h.strip() for h in rows[0][1]]
        rows = rows[1:]
        if label_names is not None and list(label_names) != names:
            raise LabelMismatchError(
                f"{path}: score columns {names} do not match labels {list(label_names)}")
    if not rows:
        raise DataFormatError("no data rows", path)
    width = len(rows[0][1])
    if expected_c is not None and width != expected_c:
        raise DataFormatError(f"score matrix has {width} columns, expected {expected_c}", path,
                              rows[0][0])
    if names is not None and len(names) != width:
        raise DataFormatError(f"header names {len(names)} columns, rows have {width}", path)
    scores = np.empty((len(rows), width))
    for r, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(f"row has {len(row)} columns, expected {width}", path, lineno)
        for c, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise DataFormatError(f"non-numeric score {cell!r} in column {c}", path,
                                      lineno) from None
            if not 0.0 <= value <= 1.0:
                raise DataFormatError(f"score {cell} out of range [0, 1] at row {r}, column {c}",
                                      path, lineno)
            scores[r, c] = value
    return scores, names


def write_matrix_csv(path, matrix, names=None):
    """Write scores or labels as CSV; floats use their shortest round-trip repr."""
    matrix = np.asarray(matrix)
    integral = np.issubdtype(matrix.dtype, np.integer) or matrix.dtype == bool
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if names is not None:
            writer.writerow(list(names))
        for row in matrix:
            writer.writerow([int(v) for v in row] if integral else [repr(float(v)) for v in row])
