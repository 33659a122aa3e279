"""Correct uncertain soft scores with CP/CA rules fired by certain scores."""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .mining import CP

log = logging.getLogger(__name__)

RELEVANT = 1
IRRELEVANT = -1
UNCERTAIN = 0

EPS = 1e-6
DEFAULT_THRESHOLDS = (0.3, 0.7)


def s_membership(x, a, b):
    """Zadeh's S-shaped membership: 0 below ``a``, 1 above ``b``, 0.5 at the midpoint."""
    x = np.asarray(x, dtype=np.float64)
    mid = 0.5 * (a + b)
    width = b - a
    lower = 2.0 * ((x - a) / width) ** 2
    upper = 1.0 - 2.0 * ((x - b) / width) ** 2
    return np.where(x <= a, 0.0, np.where(x <= mid, lower, np.where(x <= b, upper, 1.0)))


@dataclass(frozen=True)
class CertaintyThresholds:
    thr_lower: float
    thr_upper: float
    s_params: tuple = (None, None)
    fitted: bool = True

    def __post_init__(self):
        if not 0.0 < self.thr_lower < 0.5 < self.thr_upper < 1.0:
            raise ValueError(f"need 0 < thr_lower < 0.5 < thr_upper < 1, got "
                             f"({self.thr_lower}, {self.thr_upper})")
        if self.s_params == (None, None):
            object.__setattr__(self, "s_params", (self.thr_lower, self.thr_upper))

    @classmethod
    def fixed(cls, lower, upper):
        return cls(float(lower), float(upper), (float(lower), float(upper)), fitted=False)


def threshold_feet(mu, sigma):
    """S-curve feet at ``mu -/+ sigma`` clamped to [0.05, 0.45] and [0.55, 0.95]."""
    return float(np.clip(mu - sigma, 0.05, 0.45)), float(np.clip(mu + sigma, 0.55, 0.95))


def fit_thresholds(train_scores, lower=None, upper=None):
    """Place the feet of an S-membership curve at mean -/+ one standard deviation
    of all scores, clamped to [0.05, 0.45] and [0.55, 0.95]; the feet are the
    certainty thresholds. ``lower``/``upper`` override the fitted values."""
    scores = np.asarray(train_scores, dtype=np.float64).ravel()
    if np.unique(scores).size < 2:
        log.warning("constant score matrix; using default thresholds %s", DEFAULT_THRESHOLDS)
        a, b = DEFAULT_THRESHOLDS
        fitted = False
    else:
        a, b = threshold_feet(scores.mean(), scores.std())
        fitted = True
    if lower is not None or upper is not None:
        fitted = False
    a = a if lower is None else float(lower)
    b = b if upper is None else float(upper)
    return CertaintyThresholds(a, b, (a, b), fitted)


@dataclass(frozen=True, eq=False)
class CertaintyPartition:
    tags: np.ndarray

    @property
    def certain(self):
        return self.tags != UNCERTAIN

    def counts(self):
        return {
            "certain_relevant": int((self.tags == RELEVANT).sum()),
            "certain_irrelevant": int((self.tags == IRRELEVANT).sum()),
            "uncertain": int((self.tags == UNCERTAIN).sum()),
        }


def partition(scores, thresholds):
    """Tag scores strictly above ``thr_upper`` relevant, strictly below ``thr_lower``
    irrelevant and everything else (boundaries included) uncertain."""
    scores = np.asarray(scores, dtype=np.float64)
    tags = np.zeros(scores.shape, dtype=np.int8)
    tags[scores > thresholds.thr_upper] = RELEVANT
    tags[scores < thresholds.thr_lower] = IRRELEVANT
    tags.setflags(write=False)
    return CertaintyPartition(tags)


def boundary_distance(score):
    """Distance of a score from the nearer of 0 and 1."""
    return np.minimum(score, 1.0 - score)


def compute_delta(confidence, y_score, x_distance, eps=EPS):
    """Shift for an uncertain score ``y_score`` given a rule's confidence and the
    boundary distance of its certain antecedent: conf * d(y) / max(d(x), eps)."""
    return confidence * min(y_score, 1.0 - y_score) / max(x_distance, eps)


def certainty_order(scores, tags):
    """Per instance, certain labels by ascending boundary distance (most confident first)."""
    scores = np.asarray(scores)
    out = []
    for row, tag in zip(scores, tags):
        labs = np.flatnonzero(tag != UNCERTAIN)
        out.append(labs[np.argsort(boundary_distance(row[labs]), kind="stable")])
    return out


@dataclass(frozen=True, eq=False)
class CorrectionTrace:
    """One row per rule application, in application order (grouped by instance)."""

    instance: np.ndarray
    label: np.ndarray
    rule: np.ndarray
    delta: np.ndarray
    before: np.ndarray
    after: np.ndarray
    sign: np.ndarray = field(repr=False)

    def __len__(self):
        return int(self.instance.shape[0])

    def replay(self, original):
        """Re-apply the recorded shifts, in order, to ``original``."""
        out = np.array(original, dtype=np.float64, copy=True)
        for i, j, d, s in zip(self.instance, self.label, self.delta, self.sign):
            out[i, j] = min(max(out[i, j] + s * d, 0.0), 1.0)
        return out

    def saturated(self):
        """Mask of applications whose unclamped result left [0, 1]."""
        raw = self.before + self.sign * self.delta
        return (raw < 0.0) | (raw > 1.0)

    def summary(self):
        n = len(self)
        return {
            "applications": n,
            "cells_touched": int(len(set(zip(self.instance.tolist(), self.label.tolist())))),
            "saturated_fraction": float(self.saturated().mean()) if n else 0.0,
            "mean_delta": float(self.delta.mean()) if n else 0.0,
            "median_delta": float(np.median(self.delta)) if n else 0.0,
            "max_delta": float(self.delta.max()) if n else 0.0,
            "cp_applications": int((self.sign > 0).sum()),
            "ca_applications": int((self.sign < 0).sum()),
        }

    def write(self, path, label_names=None):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("instance\tlabel\trule\tpolarity\tdelta\tbefore\tafter\n")
            for i, j, r, s, d, b, a in zip(self.instance, self.label, self.rule, self.sign,
                                           self.delta, self.before, self.after):
                name = label_names[j] if label_names is not None else str(j)
                pol = "CP" if s > 0 else "CA"
                fh.write(f"{i}\t{name}\t{r}\t{pol}\t{float(d)!r}\t{float(b)!r}\t{float(a)!r}\n")


def _rule_arrays(rules):
    ant_ptr = np.zeros(len(rules) + 1, dtype=np.int64)
    con_ptr = np.zeros(len(rules) + 1, dtype=np.int64)
    ant_idx, con_idx = [], []
    for r, rule in enumerate(rules):
        ant_idx.extend(rule.antecedent)
        con_idx.extend(rule.consequent)
        ant_ptr[r + 1] = len(ant_idx)
        con_ptr[r + 1] = len(con_idx)
    sign = np.array([1 if rule.polarity == CP else -1 for rule in rules], dtype=np.int8)
    conf = np.array([rule.confidence for rule in rules], dtype=np.float64)
    return (ant_ptr, np.array(ant_idx, dtype=np.int64), con_ptr,
            np.array(con_idx, dtype=np.int64), sign, conf)


def apply_rules(scores, part, rules, thresholds=None, eps=EPS, backend=None):
    """Correct uncertain scores using ``rules`` (ordered, e.g. by ``clean_rules``).

    For every instance and every rule in order: a CP rule fires when all its
    antecedent labels are certain-relevant, a CA rule when all are
    certain-irrelevant. Each uncertain consequent label (most ambiguous first)
    moves by ``compute_delta`` toward 1 (CP) or 0 (CA), with the antecedent
    distance taken as the largest member distance, and is clamped to [0, 1].
    Certainty tags stay those of ``part``; scores are read as they evolve.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if part is None:
        if thresholds is None:
            raise ValueError("need a partition or thresholds")
        part = partition(scores, thresholds)
    if part.tags.shape != scores.shape:
        raise ValueError("partition and scores differ in shape")
    n_labels = scores.shape[1]
    for rule in rules:
        if max(rule.antecedent + rule.consequent) >= n_labels:
            raise ValueError(f"rule {rule} refers to a label beyond {n_labels} columns")
    kernel = {"numba": kernels.correct_scores_nb, "numpy": kernels.correct_scores_np,
              None: kernels.correct_scores}[backend]
    arrays = _rule_arrays(rules)
    out, inst, lab, rule_idx, delta, before, after = kernel(scores, part.tags, *arrays, eps)
    sign = arrays[4][rule_idx] if len(rules) else np.empty(0, dtype=np.int8)
    return out, CorrectionTrace(inst, lab, rule_idx, delta, before, after, sign)


def harden(scores, threshold=0.5):
    """Binary labels: 1 where the score is at least ``threshold``."""
    return (np.asarray(scores) >= threshold).astype(np.int8)


def correct(scores, rules, thresholds, eps=EPS, backend=None):
    """Partition, apply rules and harden in one call; returns (scores, labels, trace)."""
    part = partition(scores, thresholds)
    corrected, trace = apply_rules(scores, part, rules, thresholds, eps, backend)
    return corrected, harden(corrected), trace
