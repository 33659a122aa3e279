"""Multi-label datasets: containers, loaders, label statistics and fold splits."""
import csv
import math
import os
import xml.parsers.expat
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError


@dataclass(frozen=True, eq=False)
class MultiLabelDataset:
    """Feature matrix plus binary label matrix.

    ``features`` is N x D float64 (NaN marks a missing value), ``labels`` is
    N x C int8 holding only 0 and 1. Arrays are made read-only on
    construction so a dataset can be shared between fold workers.
    """

    features: np.ndarray
    labels: np.ndarray
    label_names: tuple
    feature_names: tuple = ()
    name: str = "dataset"

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64, copy=True)
        labels = np.asarray(self.labels)
        if features.ndim != 2 or labels.ndim != 2:
            raise ValueError("features and labels must be 2-D")
        if features.shape[0] != labels.shape[0]:
            raise ValueError(f"features have {features.shape[0]} rows, labels {labels.shape[0]}")
        if features.shape[0] == 0:
            raise ValueError("dataset has no instances")
        if labels.shape[1] == 0:
            raise ValueError("dataset has no labels")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must contain only 0/1 values")
        labels = labels.astype(np.int8, copy=True)
        names = tuple(str(n) for n in self.label_names)
        if len(names) != labels.shape[1]:
            raise ValueError(f"{len(names)} label names for {labels.shape[1]} label columns")
        if len(set(names)) != len(names):
            raise ValueError("label names must be unique")
        fnames = tuple(str(n) for n in self.feature_names) or tuple(
            f"f{i}" for i in range(features.shape[1]))
        if len(fnames) != features.shape[1]:
            raise ValueError(f"{len(fnames)} feature names for {features.shape[1]} feature columns")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "label_names", names)
        object.__setattr__(self, "feature_names", fnames)

    @property
    def n_instances(self):
        return self.labels.shape[0]

    @property
    def n_labels(self):
        return self.labels.shape[1]

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return MultiLabelDataset(self.features[indices], self.labels[indices],
                                 self.label_names, self.feature_names, self.name)

    def transactions(self):
        """Relevant label-set of every instance as a tuple of label indices."""
        return label_matrix_transactions(self.labels)


@dataclass(frozen=True)
class FoldSplit:
    fold_id: int
    seed: int
    train_indices: np.ndarray = field(repr=False)
    test_indices: np.ndarray = field(repr=False)


def label_matrix_transactions(labels):
    labels = np.asarray(labels)
    return [tuple(int(j) for j in np.flatnonzero(row)) for row in labels]


def _label_matrix(data):
    if isinstance(data, MultiLabelDataset):
        return data.labels
    return np.asarray(data)


def label_support(dataset, label):
    """Fraction of instances for which ``label`` is relevant."""
    labels = _label_matrix(dataset)
    n, c = labels.shape
    if not 0 <= label < c:
        raise IndexError(f"label index {label} out of range for {c} labels")
    return int(labels[:, label].sum()) / n


def complement_labels(dataset):
    """Irrelevant-label indicator matrix, ``1 - labels``."""
    labels = _label_matrix(dataset)
    return (1 - labels).astype(labels.dtype)


def filter_frequent_labels(dataset):
    """Indices of labels whose support is at least the mean label support."""
    labels = _label_matrix(dataset)
    counts = labels.sum(axis=0).astype(np.int64)
    # support_j >= mean(support)  <=>  count_j * C >= sum(counts), exact in integers
    keep = counts * labels.shape[1] >= counts.sum()
    return [int(j) for j in np.flatnonzero(keep)]


def kfold_split(dataset, k, seed=0):
    """Seeded shuffled k-fold partition; the first ``N % k`` folds get one extra instance."""
    n = dataset if isinstance(dataset, (int, np.integer)) else _label_matrix(dataset).shape[0]
    n = int(n)
    if not 2 <= k <= n:
        raise ValueError(f"k must satisfy 2 <= k <= N (k={k}, N={n})")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    folds = []
    start = 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        test = np.sort(perm[start:start + size])
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        folds.append(FoldSplit(f, seed, np.flatnonzero(mask), test))
        start += size
    return folds


def impute_missing(train_features, *others):
    """Replace NaNs by per-column means of ``train_features`` (0 for all-missing columns)."""
    train_features = np.asarray(train_features, dtype=np.float64)
    missing = np.isnan(train_features)
    if not missing.any() and not any(np.isnan(o).any() for o in others):
        return (train_features,) + tuple(np.asarray(o, dtype=np.float64) for o in others)
    counts = (~missing).sum(axis=0)
    sums = np.where(missing, 0.0, train_features).sum(axis=0)
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    filled = []
    for arr in (train_features,) + others:
        arr = np.array(arr, dtype=np.float64, copy=True)
        rows, cols = np.nonzero(np.isnan(arr))
        arr[rows, cols] = means[cols]
        filled.append(arr)
    return tuple(filled)


# ---------------------------------------------------------------------------
# ARFF + XML label specification
# ---------------------------------------------------------------------------

_NUMERIC_TYPES = {"numeric", "real", "integer"}


def _read_lines(path):
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    return text.splitlines()


def _unquote(token):
    token = token.strip()
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "'\"":
        body = token[1:-1]
        return body.replace("\\" + token[0], token[0]).replace("\\\\", "\\")
    return token


def _split_values(text, path, lineno):
    """Split a comma separated ARFF row respecting single/double quotes."""
    values = []
    buf = []
    quote = None
    i = 0
    while i < len(text):
        ch = text[i]
        if quote:
            if ch == "\\" and i + 1 < len(text):
                buf.append(text[i + 1])
                i += 2
                continue
            if ch == quote:
                quote = None
            else:
                buf.append(ch)
        elif ch in "'\"":
            quote = ch
        elif ch == ",":
            values.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
        i += 1
    if quote:
        raise DataFormatError("unterminated quote", path, lineno)
    values.append("".join(buf).strip())
    return values


def _parse_attribute(rest, path, lineno):
    rest = rest.strip()
    if not rest:
        raise DataFormatError("@attribute without a name", path, lineno)
    if rest[0] in "'\"":
        q = rest[0]
        end = 1
        while end < len(rest) and not (rest[end] == q and rest[end - 1] != "\\"):
            end += 1
        if end >= len(rest):
            raise DataFormatError("unterminated quoted attribute name", path, lineno)
        name = _unquote(rest[:end + 1])
        kind = rest[end + 1:].strip()
    else:
        parts = rest.split(None, 1)
        if len(parts) < 2:
            raise DataFormatError(f"@attribute {parts[0]!r} has no type", path, lineno)
        name, kind = parts
        if "{" in name:  # e.g. name{0,1} without whitespace
            name, brace = name.split("{", 1)
            kind = "{" + brace + " " + kind
    kind = kind.strip()
    if not kind:
        raise DataFormatError(f"@attribute {name!r} has no type", path, lineno)
    if kind.startswith("{"):
        if not kind.endswith("}"):
            raise DataFormatError(f"malformed nominal specification for {name!r}", path, lineno)
        values = [_unquote(v) for v in _split_values(kind[1:-1], path, lineno)]
        if not values or any(v == "" for v in values):
            raise DataFormatError(f"empty nominal value for {name!r}", path, lineno)
        return name, values
    if kind.lower() in _NUMERIC_TYPES:
        return name, None
    raise DataFormatError(f"unsupported attribute type {kind!r} for {name!r}", path, lineno)


def parse_arff(path):
    """Return ``(relation, attributes, rows)``; attributes are ``(name, nominal_values|None)``
    and rows are ``(line_number, [raw string values])``."""
    lines = _read_lines(path)
    relation = None
    attributes = []
    rows = []
    in_data = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if not in_data:
            if not line.startswith("@"):
                raise DataFormatError(f"unexpected content in header: {line[:40]!r}", path, lineno)
            keyword, _, rest = line.partition(" ")
            keyword = keyword.lower()
            if keyword == "@relation":
                # Mulan appends options to the name, e.g. 'emotions: -C -6'
                relation = _unquote(rest).split(" -")[0].strip().rstrip(":")
            elif keyword == "@attribute":
                attributes.append(_parse_attribute(rest, path, lineno))
            elif keyword == "@data":
                if not attributes:
                    raise DataFormatError("@data before any @attribute", path, lineno)
                in_data = True
            else:
                raise DataFormatError(f"unknown header keyword {keyword!r}", path, lineno)
            continue
        if line.startswith("{"):
            raise DataFormatError("sparse ARFF rows are not supported", path, lineno)
        values = _split_values(line, path, lineno)
        if len(values) != len(attributes):
            raise DataFormatError(
                f"row has {len(values)} values, header declares {len(attributes)} attributes",
                path, lineno)
        rows.append((lineno, values))
    if relation is None:
        raise DataFormatError("missing @relation", path, 1 if lines else None)
    if not in_data:
        raise DataFormatError("missing @data section", path, len(lines) or None)
    return relation, attributes, rows


def read_label_spec(path):
    """Label names from a Mulan XML label file, in document order (hierarchies flattened)."""
    names = []
    parser = xml.parsers.expat.ParserCreate()

    def start(tag, attrs):
        local = tag.rsplit(":", 1)[-1].rsplit("}", 1)[-1]
        if local == "label":
            if "name" not in attrs:
                raise DataFormatError("<label> element without a name attribute", path,
                                      parser.CurrentLineNumber)
            names.append((attrs["name"], parser.CurrentLineNumber))

    parser.StartElementHandler = start
    with open(path, "rb") as fh:
        try:
            parser.ParseFile(fh)
        except xml.parsers.expat.ExpatError as exc:
            raise DataFormatError(f"malformed XML: {exc}", path, exc.lineno) from None
    if not names:
        raise DataFormatError("label specification names no labels", path)
    return names


def _binary_value(token, kind, attr, path, lineno):
    if token == "?":
        raise DataFormatError(f"missing value in label column {attr!r}", path, lineno)
    if kind is not None and token not in kind:
        raise DataFormatError(f"value {token!r} not declared for label {attr!r}", path, lineno)
    try:
        value = float(token)
    except ValueError:
        raise DataFormatError(f"non-binary value {token!r} in label column {attr!r}", path,
                              lineno) from None
    if value not in (0.0, 1.0):
        raise DataFormatError(f"non-binary value {token!r} in label column {attr!r}", path, lineno)
    return int(value)


def load_mulan_arff(data_path, label_spec_path):
    """Load a Mulan-style dataset: dense ARFF file plus XML list of label attributes.

    Label attributes become label columns (in file order); all remaining
    attributes are features in file order. Nominal features are coded by
    their zero-based declaration index; ``?`` becomes NaN.
    """
    relation, attributes, rows = parse_arff(data_path)
    spec = read_label_spec(label_spec_path)
    positions = {name: i for i, (name, _) in enumerate(attributes)}
    label_set = set()
    for name, lineno in spec:
        if name not in positions:
            raise DataFormatError(f"label {name!r} is not an attribute of {data_path}",
                                  label_spec_path, lineno)
        if name in label_set:
            raise DataFormatError(f"label {name!r} listed twice", label_spec_path, lineno)
        label_set.add(name)
    label_cols = [i for i, (name, _) in enumerate(attributes) if name in label_set]
    feature_cols = [i for i, (name, _) in enumerate(attributes) if name not in label_set]
    if not rows:
        raise DataFormatError("no data rows", data_path)

    n = len(rows)
    features = np.empty((n, len(feature_cols)))
    labels = np.empty((n, len(label_cols)), dtype=np.int8)
    codes = [{v: k for k, v in enumerate(attributes[c][1])} if attributes[c][1] is not None else None
             for c in feature_cols]
    for r, (lineno, values) in enumerate(rows):
        for out_col, col in enumerate(feature_cols):
            token = _unquote(values[col])
            if token == "?":
                features[r, out_col] = np.nan
            elif codes[out_col] is not None:
                try:
                    features[r, out_col] = codes[out_col][token]
                except KeyError:
                    raise DataFormatError(
                        f"value {token!r} not declared for attribute {attributes[col][0]!r}",
                        data_path, lineno) from None
            else:
                try:
                    features[r, out_col] = float(token)
                except ValueError:
                    raise DataFormatError(
                        f"non-numeric value {token!r} for attribute {attributes[col][0]!r}",
                        data_path, lineno) from None
        for out_col, col in enumerate(label_cols):
            name, kind = attributes[col]
            labels[r, out_col] = _binary_value(_unquote(values[col]), kind, name, data_path, lineno)

    return MultiLabelDataset(
        features, labels,
        label_names=[attributes[c][0] for c in label_cols],
        feature_names=[attributes[c][0] for c in feature_cols],
        name=relation or os.path.splitext(os.path.basename(str(data_path)))[0],
    )


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def load_csv(path, label_count):
    """Load a CSV with a header row whose last ``label_count`` columns are 0/1 labels."""
    with open(path, encoding="utf-8", newline="") as fh:
        records = [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if row]
    if not records:
        raise DataFormatError("no data rows (file is empty)", path)
    _, header = records[0]
    header = [h.strip() for h in header]
    body = records[1:]
    if not body:
        raise DataFormatError("no data rows", path)
    if label_count < 1:
        raise DataFormatError(f"label_count must be positive, got {label_count}", path)
    if label_count >= len(header):
        raise DataFormatError(
            f"label_count {label_count} leaves no feature columns among {len(header)}", path, 1)
    n_feat = len(header) - label_count
    features = np.empty((len(body), n_feat))
    labels = np.empty((len(body), label_count), dtype=np.int8)
    for r, (lineno, row) in enumerate(body):
        if len(row) != len(header):
            raise DataFormatError(f"ragged row: {len(row)} cells, header has {len(header)}",
                                  path, lineno)
        for c in range(n_feat):
            cell = row[c].strip()
            if cell in ("", "?"):
                features[r, c] = np.nan
                continue
            try:
                features[r, c] = float(cell)
            except ValueError:
                raise DataFormatError(f"non-numeric feature cell {cell!r} in column {header[c]!r}",
                                      path, lineno) from None
        for c in range(label_count):
            cell = row[n_feat + c].strip()
            try:
                value = float(cell)
            except ValueError:
                value = math.nan
            if value not in (0.0, 1.0):
                raise DataFormatError(
                    f"non-binary label cell {cell!r} in column {header[n_feat + c]!r}", path, lineno)
            labels[r, c] = int(value)
    return MultiLabelDataset(features, labels, label_names=header[n_feat:],
                             feature_names=header[:n_feat],
                             name=os.path.splitext(os.path.basename(str(path)))[0])


def save_csv(dataset, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(dataset.feature_names) + list(dataset.label_names))
        for x, y in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in x] + [int(v) for v in y])


def load_dataset(path, label_spec=None, label_count=None):
    """Dispatch on inputs: ARFF + XML label spec, or CSV + trailing label count."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if label_spec is not None:
        if not os.path.exists(label_spec):
            raise FileNotFoundError(label_spec)
        return load_mulan_arff(path, label_spec)
    if label_count is None:
        raise ValueError("a CSV dataset needs label_count; an ARFF dataset needs a label spec")
    return load_csv(path, label_count)
