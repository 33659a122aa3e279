"""Example- and label-based multi-label evaluation measures."""
from dataclasses import asdict, dataclass, fields

import numpy as np

METRICS = ("hamming_loss", "ranking_loss", "one_error", "subset_accuracy",
           "macro_f1", "micro_f1", "accuracy")
SHORT_NAMES = dict(zip(METRICS, ("HL", "RL", "OE", "SA", "MacF1", "MicF1", "Acc")))
LOWER_IS_BETTER = {"hamming_loss", "ranking_loss", "one_error"}


@dataclass(frozen=True)
class EvaluationReport:
    hamming_loss: float
    ranking_loss: float
    one_error: float
    subset_accuracy: float
    macro_f1: float
    micro_f1: float
    accuracy: float

    def as_dict(self):
        return asdict(self)

    def improved_over(self, other):
        """Metrics on which ``self`` is strictly better than ``other``."""
        better = []
        for name in METRICS:
            mine, theirs = getattr(self, name), getattr(other, name)
            if (mine < theirs) if name in LOWER_IS_BETTER else (mine > theirs):
                better.append(name)
        return better


def _check(pred_labels, pred_scores, truth):
    truth = np.asarray(truth)
    pred_labels = np.asarray(pred_labels)
    pred_scores = np.asarray(pred_scores, dtype=np.float64)
    if truth.ndim != 2 or pred_labels.shape != truth.shape or pred_scores.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred_labels.shape}, scores {pred_scores.shape}, "
                         f"truth {truth.shape}")
    if not np.isin(truth, (0, 1)).all():
        raise ValueError("truth must be binary")
    if not np.isin(pred_labels, (0, 1)).all():
        raise ValueError("predicted labels must be binary")
    return pred_labels.astype(bool), pred_scores, truth.astype(bool)


def ranking_loss(scores, truth):
    """Mean fraction of (relevant, irrelevant) pairs ranked wrongly; ties count 1/2.
    Instances without such a pair are skipped."""
    losses = []
    for s, t in zip(scores, truth):
        rel, irr = s[t], s[~t]
        if rel.size == 0 or irr.size == 0:
            continue
        diff = rel[:, None] - irr[None, :]
        losses.append(((diff < 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)
    return float(np.mean(losses)) if losses else 0.0


def one_error(scores, truth):
    """Fraction of instances whose top-scoring label is irrelevant (first index on ties).
    Instances with no relevant label are skipped."""
    keep = truth.any(axis=1)
    if not keep.any():
        return 0.0
    top = np.argmax(scores[keep], axis=1)
    return float(1.0 - truth[keep][np.arange(top.size), top].mean())


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return np.divide(2.0 * tp, denom, out=np.zeros_like(denom, dtype=np.float64), where=denom > 0)


def evaluate(pred_labels, pred_scores, truth):
    pred, scores, truth = _check(pred_labels, pred_scores, truth)
    hl = float((pred != truth).mean())
    sa = float((pred == truth).all(axis=1).mean())
    inter = (pred & truth).sum(axis=1)
    union = (pred | truth).sum(axis=1)
    acc = float(np.where(union == 0, 1.0, inter / np.maximum(union, 1)).mean())
    tp = (pred & truth).sum(axis=0)
    fp = (pred & ~truth).sum(axis=0)
    fn = (~pred & truth).sum(axis=0)
    macro = float(_f1(tp, fp, fn).mean())
    micro = float(_f1(np.array(tp.sum()), np.array(fp.sum()), np.array(fn.sum())))
    return EvaluationReport(hl, ranking_loss(scores, truth), one_error(scores, truth), sa,
                            macro, micro, acc)


def aggregate(reports):
    """Metric-wise arithmetic mean."""
    reports = list(reports)
    if not reports:
        raise ValueError("cannot aggregate an empty list of reports")
    return EvaluationReport(**{f.name: float(np.mean([getattr(r, f.name) for r in reports]))
                               for f in fields(EvaluationReport)})
