"""Frequent label-set mining over relevant and irrelevant label-sets.

Label-sets are plain tuples of strictly increasing label indices. Transactions
are label-sets too, except that they may be empty: an instance without any
relevant label still counts toward N.
"""
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import kernels
from .data import complement_labels, filter_frequent_labels, label_matrix_transactions
from .errors import DataFormatError, LabelMismatchError

CP = "CP"
CA = "CA"
POLARITIES = (CP, CA)

_CONF_SLACK = 1e-12


def as_labelset(members):
    """Validate and return ``members`` as a non-empty, strictly increasing tuple."""
    ls = tuple(int(m) for m in members)
    if not ls:
        raise ValueError("label-set must be non-empty")
    if any(a >= b for a, b in zip(ls, ls[1:])):
        raise ValueError(f"label-set must be strictly increasing: {ls}")
    if ls[0] < 0:
        raise ValueError(f"negative label index in {ls}")
    return ls


def min_count(min_sup, n):
    """Smallest transaction count whose support ``count / n`` reaches ``min_sup``."""
    if not 0.0 < min_sup <= 1.0:
        raise ValueError(f"min_sup must lie in (0, 1], got {min_sup}")
    return max(1, math.ceil(min_sup * n - 1e-9))


@dataclass(frozen=True)
class MiningParams:
    min_sup_cp: float = 0.1
    min_conf_cp: float = 0.5
    min_sup_ca: float = 0.8
    min_conf_ca: float = 0.9
    max_labelset_size: int = 3
    use_frequency_filter: bool = False

    def __post_init__(self):
        for name in ("min_sup_cp", "min_conf_cp", "min_sup_ca", "min_conf_ca"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if self.max_labelset_size < 1:
            raise ValueError("max_labelset_size must be positive")


@dataclass(frozen=True)
class FrequentLabelSet:
    labels: tuple
    support: float
    count: int


@dataclass(frozen=True)
class AssociationRule:
    antecedent: tuple
    consequent: tuple
    polarity: str
    support: float
    confidence: float

    def __post_init__(self):
        if self.polarity not in POLARITIES:
            raise ValueError(f"polarity must be CP or CA, got {self.polarity!r}")
        if set(self.antecedent) & set(self.consequent):
            raise ValueError("antecedent and consequent overlap")

    @property
    def pair(self):
        return self.antecedent, self.consequent


# ---------------------------------------------------------------------------
# FP-tree
# ---------------------------------------------------------------------------

class FPNode:
    __slots__ = ("label", "count", "parent", "children")

    def __init__(self, label, parent):
        self.label = label
        self.count = 0
        self.parent = parent
        self.children = {}

    def __repr__(self):
        return f"FPNode({self.label}, {self.count})"


class FPTree:
    """Prefix tree of support-ordered transactions.

    ``header`` maps each retained label to its nodes in insertion order;
    ``item_order`` lists retained labels by descending count, ties by
    ascending label index; ``label_counts`` holds the retained labels'
    transaction counts.
    """

    def __init__(self, label_counts, n_transactions):
        self.root = FPNode(None, None)
        self.label_counts = dict(label_counts)
        self.item_order = sorted(self.label_counts, key=lambda lab: (-self.label_counts[lab], lab))
        self.rank = {lab: i for i, lab in enumerate(self.item_order)}
        self.header = {lab: [] for lab in self.item_order}
        self.n_transactions = n_transactions

    def insert(self, labels, count=1):
        """Insert a transaction; labels not retained by the tree are dropped."""
        path = sorted((lab for lab in labels if lab in self.rank), key=self.rank.__getitem__)
        node = self.root
        for lab in path:
            child = node.children.get(lab)
            if child is None:
                child = node.children[lab] = FPNode(lab, node)
                self.header[lab].append(child)
            child.count += count
            node = child

    def is_empty(self):
        return not self.root.children

    def nodes(self):
        stack = list(self.root.children.values())
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children.values())

    def prefix_path(self, node):
        path = []
        node = node.parent
        while node.label is not None:
            path.append(node.label)
            node = node.parent
        path.reverse()
        return path

    def as_nested(self):
        """``{label: (count, {...children})}``, handy for inspection and tests."""
        def walk(node):
            return {lab: (child.count, walk(child)) for lab, child in node.children.items()}
        return walk(self.root)


def _weighted_tree(weighted, threshold, n_transactions):
    weighted = list(weighted)
    counts = {}
    for labels, count in weighted:
        for lab in labels:
            counts[lab] = counts.get(lab, 0) + count
    tree = FPTree({lab: c for lab, c in counts.items() if c >= threshold}, n_transactions)
    for labels, count in weighted:
        tree.insert(labels, count)
    return tree


def build_fp_tree(transactions, min_sup, n=None):
    """Build the FP-tree of ``transactions``, dropping labels with support below ``min_sup``.

    ``n`` defaults to ``len(transactions)``; empty transactions count toward it.
    """
    n = len(transactions) if n is None else int(n)
    if n < len(transactions):
        raise ValueError(f"n={n} is smaller than the number of transactions")
    threshold = min_count(min_sup, n)
    return _weighted_tree(((t, 1) for t in transactions), threshold, n) if n else FPTree({}, 0)


def _fp_growth(tree, suffix, threshold, max_size, out):
    for lab in reversed(tree.item_order):
        nodes = tree.header[lab]
        count = sum(node.count for node in nodes)
        if count < threshold:
            continue
        itemset = (lab,) + suffix
        out[tuple(sorted(itemset))] = count
        if len(itemset) >= max_size:
            continue
        base = [(tree.prefix_path(node), node.count) for node in nodes]
        base = [(path, c) for path, c in base if path]
        if not base:
            continue
        conditional = _weighted_tree(base, threshold, tree.n_transactions)
        if not conditional.is_empty():
            _fp_growth(conditional, itemset, threshold, max_size, out)


def _sorted_frequent(counts, n):
    found = [FrequentLabelSet(labels, c / n, c) for labels, c in counts.items()]
    found.sort(key=lambda f: (-f.count, f.labels))
    return found


def extract_frequent_labelsets(tree, min_sup, n=None, max_size=3):
    """All label-sets of size 1..max_size with support >= ``min_sup`` (FP-growth)."""
    n = tree.n_transactions if n is None else int(n)
    if n == 0 or tree.is_empty():
        return []
    threshold = min_count(min_sup, n)
    counts = {}
    _fp_growth(tree, (), threshold, max_size, counts)
    return _sorted_frequent(counts, n)


def frequent_labelsets(transactions, min_sup, max_size=3, n=None):
    tree = build_fp_tree(transactions, min_sup, n)
    return extract_frequent_labelsets(tree, min_sup, tree.n_transactions, max_size)


def enumerate_frequent_labelsets_naive(transactions, min_sup, max_size=3, n_labels=None, n=None):
    """Brute force reference: count every label subset up to ``max_size``.

    Transactions are encoded as bitmasks, so at most 20 labels are accepted.
    """
    if not 0.0 < min_sup <= 1.0:
        raise ValueError(f"min_sup must lie in (0, 1], got {min_sup}")
    n = len(transactions) if n is None else int(n)
    if n_labels is None:
        n_labels = 1 + max((max(t) for t in transactions if t), default=-1)
    if n_labels > 20:
        raise ValueError(f"naive enumeration supports at most 20 labels, got {n_labels}")
    if n == 0 or n_labels == 0:
        return []
    encoded = np.array([sum(1 << lab for lab in t) for t in transactions], dtype=np.int64)
    subsets = [s for size in range(1, min(max_size, n_labels) + 1)
               for s in combinations(range(n_labels), size)]
    masks = np.array([sum(1 << lab for lab in s) for s in subsets], dtype=np.int64)
    counts = kernels.subset_counts(encoded, masks)
    found = {s: int(c) for s, c in zip(subsets, counts) if c > 0 and c / n >= min_sup - 1e-12}
    return _sorted_frequent(found, n)


# ---------------------------------------------------------------------------
# rules
# ---------------------------------------------------------------------------

def _indicator(transactions, n_labels):
    mat = np.zeros((len(transactions), n_labels), dtype=bool)
    for i, t in enumerate(transactions):
        mat[i, list(t)] = True
    return mat


def generate_rules(frequent, transactions, min_conf, polarity, n=None):
    """Split every frequent label-set of size >= 2 into antecedent -> consequent rules.

    Support is ``count(A u B) / n`` and confidence ``count(A u B) / count(A)``,
    both recounted from ``transactions``. Rules below ``min_conf`` are dropped.
    """
    if polarity not in POLARITIES:
        raise ValueError(f"polarity must be CP or CA, got {polarity!r}")
    if not 0.0 < min_conf <= 1.0:
        raise ValueError(f"min_conf must lie in (0, 1], got {min_conf}")
    n = len(transactions) if n is None else int(n)
    big = [f for f in frequent if len(f.labels) >= 2]
    if not big or n == 0:
        return []
    n_labels = 1 + max(max(f.labels) for f in big)
    n_labels = max(n_labels, 1 + max((max(t) for t in transactions if t), default=-1))
    present = _indicator(transactions, n_labels)
    cache = {}

    def count(labels):
        if labels not in cache:
            cache[labels] = int(present[:, list(labels)].all(axis=1).sum())
        return cache[labels]

    rules = []
    for f in big:
        whole = count(f.labels)
        for size in range(1, len(f.labels)):
            for ante in combinations(f.labels, size):
                cons = tuple(lab for lab in f.labels if lab not in ante)
                ante_count = count(ante)
                confidence = whole / ante_count
                if confidence + _CONF_SLACK < min_conf:
                    continue
                rules.append(AssociationRule(ante, cons, polarity, whole / n, confidence))
    return rules


def _mine(transactions, n, min_sup, min_conf, max_size, polarity):
    frequent = frequent_labelsets(transactions, min_sup, max_size, n)
    return generate_rules(frequent, transactions, min_conf, polarity, n)


def mine_cp_ca(dataset, params=None):
    """Mine co-presence rules from relevant label-sets and co-absence rules from
    the complemented label matrix. Accepts a dataset or a raw label matrix."""
    params = params or MiningParams()
    labels = dataset.labels if hasattr(dataset, "labels") else np.asarray(dataset)
    n = labels.shape[0]
    cp_labels = labels
    if params.use_frequency_filter:
        keep = np.zeros(labels.shape[1], dtype=bool)
        keep[filter_frequent_labels(labels)] = True
        cp_labels = labels * keep
    cp = _mine(label_matrix_transactions(cp_labels), n, params.min_sup_cp, params.min_conf_cp,
               params.max_labelset_size, CP)
    ca = _mine(label_matrix_transactions(complement_labels(labels)), n, params.min_sup_ca,
               params.min_conf_ca, params.max_labelset_size, CA)
    return cp, ca


def rule_sort_key(rule):
    return (-rule.confidence, -rule.support, rule.antecedent, rule.consequent,
            POLARITIES.index(rule.polarity))


def clean_rules(cp_rules, ca_rules):
    """Merge CP and CA rules, resolving identical (antecedent, consequent) pairs.

    Of two rules on the same pair the higher confidence wins, then the higher
    support, then CP. The result is totally ordered by descending confidence,
    descending support, antecedent, consequent, polarity.
    """
    best = {}
    for rule in list(cp_rules) + list(ca_rules):
        current = best.get(rule.pair)
        if current is None or rule_sort_key(rule) < rule_sort_key(current):
            best[rule.pair] = rule
    return sorted(best.values(), key=rule_sort_key)


# ---------------------------------------------------------------------------
# rule files: polarity \t antecedent names \t consequent names \t support \t confidence
# ---------------------------------------------------------------------------

def _check_name(name):
    if any(ch in name for ch in ",\t\n\r"):
        raise ValueError(f"label name {name!r} cannot be written to a rule file")
    return name


def format_rule(rule, label_names):
    ante = ",".join(_check_name(label_names[i]) for i in rule.antecedent)
    cons = ",".join(_check_name(label_names[i]) for i in rule.consequent)
    return f"{rule.polarity}\t{ante}\t{cons}\t{rule.support!r}\t{rule.confidence!r}"


def write_rules(path, rules, label_names):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rule in rules:
            fh.write(format_rule(rule, label_names) + "\n")


def parse_rule(line, label_index, path=None, lineno=None):
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) != 5:
        raise DataFormatError(f"expected 5 tab-separated fields, got {len(fields)}", path, lineno)
    polarity, ante, cons, support, confidence = fields
    if polarity not in POLARITIES:
        raise DataFormatError(f"unknown polarity {polarity!r}", path, lineno)

    def indices(text):
        out = []
        for name in text.split(","):
            if name not in label_index:
                raise LabelMismatchError(
                    f"{path or 'rules'}:{lineno}: label {name!r} not among the known labels")
            out.append(label_index[name])
        return as_labelset(sorted(out))

    try:
        sup = float(support)
        conf = float(confidence)
    except ValueError:
        raise DataFormatError("support/confidence are not numbers", path, lineno) from None
    try:
        return AssociationRule(indices(ante), indices(cons), polarity, sup, conf)
    except ValueError as exc:
        if isinstance(exc, LabelMismatchError):
            raise
        raise DataFormatError(str(exc), path, lineno) from None


def read_rules(path, label_names):
    """Read a rule file; label names are resolved against ``label_names``."""
    label_index = {name: i for i, name in enumerate(label_names)}
    rules = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            rules.append(parse_rule(line, label_index, path, lineno))
    return rules


def rule_file_labels(path):
    """Every label name mentioned in a rule file."""
    names = set()
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.rstrip("\r\n").split("\t")
            if len(fields) >= 3:
                names.update(fields[1].split(","))
                names.update(fields[2].split(","))
    return names
