"""Cross-validated FLMA runs: mine, score, correct, evaluate, write artifacts."""
import csv
import json
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .correction import apply_rules, fit_thresholds, harden, partition
from .data import impute_missing, kfold_split, load_dataset
from .metrics import METRICS, SHORT_NAMES, aggregate, evaluate
from .mining import MiningParams, clean_rules, mine_cp_ca, write_rules
from .mlknn import fit_mlknn, load_external_scores, predict_scores_mlknn

log = logging.getLogger(__name__)

CLASSIFIERS = ("mlknn", "external")


@dataclass(frozen=True)
class RunConfig:
    data: str = ""
    label_spec: str = None
    label_count: int = None
    classifier: str = "mlknn"
    scores: str = None
    scores_header: bool = False
    k: int = 10
    smoothing: float = 1.0
    min_sup_cp: float = 0.1
    min_conf_cp: float = 0.5
    min_sup_ca: float = 0.8
    min_conf_ca: float = 0.9
    max_labelset_size: int = 3
    use_frequency_filter: bool = False
    thr_lower: float = None
    thr_upper: float = None
    folds: int = 5
    runs: int = 1
    seed: int = 0
    output: str = "flma_out"
    trace: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"classifier must be one of {CLASSIFIERS}, got {self.classifier!r}")
        if self.classifier == "external" and not self.scores:
            raise ValueError("classifier 'external' needs a scores file")
        if self.k < 1 or self.smoothing <= 0:
            raise ValueError("k must be >= 1 and smoothing > 0")
        if self.runs < 1 or self.jobs < 1:
            raise ValueError("runs and jobs must be >= 1")
        self.mining_params()  # validates thresholds

    def mining_params(self):
        return MiningParams(self.min_sup_cp, self.min_conf_cp, self.min_sup_ca, self.min_conf_ca,
                            self.max_labelset_size, self.use_frequency_filter)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_mapping(cls, mapping):
        """Build from a flat mapping; string values (config files) are coerced."""
        types = {f.name: f.default for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown configuration key {key!r}")
            kwargs[key] = _coerce(key, value)
        return cls(**kwargs)


_INT_KEYS = {"label_count", "k", "max_labelset_size", "folds", "runs", "seed", "jobs"}
_FLOAT_KEYS = {"smoothing", "min_sup_cp", "min_conf_cp", "min_sup_ca", "min_conf_ca",
               "thr_lower", "thr_upper"}
_BOOL_KEYS = {"scores_header", "use_frequency_filter", "trace"}


def _coerce(key, value):
    if value is None or not isinstance(value, str):
        return value
    text = value.strip()
    if text.lower() in ("", "none", "null"):
        return None
    if key in _INT_KEYS:
        return int(text)
    if key in _FLOAT_KEYS:
        return float(text)
    if key in _BOOL_KEYS:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {value!r}")
    return text


def read_config_file(path):
    """JSON object or ``key = value`` lines (``#`` comments)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return json.loads(text)
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


# ---------------------------------------------------------------------------
# one fold
# ---------------------------------------------------------------------------

def _fold_scores(dataset, split, config, external):
    if config.classifier == "external":
        return external[split.train_indices], external[split.test_indices]
    train_x, test_x = impute_missing(dataset.features[split.train_indices],
                                     dataset.features[split.test_indices])
    model = fit_mlknn(train_x, config.k, config.smoothing,
                      labels=dataset.labels[split.train_indices])
    return model.training_scores(), predict_scores_mlknn(model, test_x)


def run_fold(dataset, split, config, external=None):
    """Everything for one train/test split; returns a plain dict of results."""
    train_labels = dataset.labels[split.train_indices]
    truth = dataset.labels[split.test_indices]
    cp, ca = mine_cp_ca(train_labels, config.mining_params())
    rules = clean_rules(cp, ca)
    train_scores, test_scores = _fold_scores(dataset, split, config, external)
    thresholds = fit_thresholds(train_scores, config.thr_lower, config.thr_upper)
    part = partition(test_scores, thresholds)
    corrected, trace = apply_rules(test_scores, part, rules, thresholds)
    baseline = evaluate(harden(test_scores), test_scores, truth)
    flma = evaluate(harden(corrected), corrected, truth)
    return {
        "split": split,
        "cp_rules": cp,
        "ca_rules": ca,
        "rules": rules,
        "thresholds": thresholds,
        "partition": part.counts(),
        "trace": trace,
        "baseline": baseline,
        "flma": flma,
        "flipped_labels": int((harden(corrected) != harden(test_scores)).sum()),
    }


def _fold_task(args):
    dataset, split, config, external, run = args
    try:
        return run, run_fold(dataset, split, config, external), None
    except Exception:  # noqa: BLE001 - reported per fold, the run continues
        return run, None, traceback.format_exc()


# ---------------------------------------------------------------------------
# whole run
# ---------------------------------------------------------------------------

def _dump_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fold_dir(config, run, fold):
    return os.path.join(config.output, f"run{run}_fold{fold}")


def _write_fold(config, dataset, run, result):
    split = result["split"]
    path = _fold_dir(config, run, split.fold_id)
    os.makedirs(path, exist_ok=True)
    write_rules(os.path.join(path, "rules.tsv"), result["cp_rules"] + result["ca_rules"],
                dataset.label_names)
    write_rules(os.path.join(path, "rules_clean.tsv"), result["rules"], dataset.label_names)
    _dump_json(os.path.join(path, "split.json"), {
        "fold": split.fold_id, "seed": split.seed,
        "train": split.train_indices.tolist(), "test": split.test_indices.tolist()})
    _dump_json(os.path.join(path, "report.json"), fold_summary(result))
    if config.trace:
        result["trace"].write(os.path.join(path, "trace.tsv"), dataset.label_names)


def fold_summary(result):
    thr = result["thresholds"]
    return {
        "baseline": result["baseline"].as_dict(),
        "flma": result["flma"].as_dict(),
        "thresholds": {"lower": thr.thr_lower, "upper": thr.thr_upper, "fitted": thr.fitted},
        "rule_counts": {"cp": len(result["cp_rules"]), "ca": len(result["ca_rules"]),
                        "clean": len(result["rules"])},
        "partition": result["partition"],
        "correction": result["trace"].summary(),
        "flipped_labels": result["flipped_labels"],
    }


def _write_metric_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def run_cross_validation(config, dataset=None):
    """Run ``config.runs`` rounds of k-fold CV and write every artifact to ``config.output``.

    Returns a dict with per-fold results, aggregate reports and failures.
    """
    if dataset is None:
        dataset = load_dataset(config.data, config.label_spec, config.label_count)
    external = None
    if config.classifier == "external":
        external = load_external_scores(config.scores, dataset.n_labels, config.scores_header,
                                        dataset.label_names if config.scores_header else None)
        if external.shape[0] != dataset.n_instances:
            raise ValueError(f"external scores have {external.shape[0]} rows, dataset has "
                             f"{dataset.n_instances}")
    os.makedirs(config.output, exist_ok=True)
    with open(os.path.join(config.output, "run_config.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(config.to_json())

    tasks = [(dataset, split, config, external, run)
             for run in range(config.runs)
             for split in kfold_split(dataset, config.folds, config.seed + run)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(_fold_task, tasks))
    else:
        outcomes = [_fold_task(t) for t in tasks]

    results, failures = [], []
    for (_, split, _, _, _), (run, result, error) in zip(tasks, outcomes):
        if error is not None:
            path = _fold_dir(config, run, split.fold_id)
            os.makedirs(path, exist_ok=True)
            with open(os.path.join(path, "error.txt"), "w", encoding="utf-8") as fh:
                fh.write(error)
            log.error("run %d fold %d failed:\n%s", run, split.fold_id, error)
            failures.append((run, split.fold_id, error))
            continue
        _write_fold(config, dataset, run, result)
        results.append((run, result))

    summary = {"dataset": dataset.name, "folds": [], "failures": len(failures)}
    if results:
        baseline = aggregate(r["baseline"] for _, r in results)
        flma = aggregate(r["flma"] for _, r in results)
        summary.update(baseline=baseline, flma=flma)
        _write_outputs(config, dataset, results, baseline, flma)
    summary["folds"] = results
    summary["failed"] = failures
    return summary


def _write_outputs(config, dataset, results, baseline, flma):
    out = config.output
    metric_cols = [SHORT_NAMES[m] for m in METRICS]
    _write_metric_rows(
        os.path.join(out, "folds.csv"), ["run", "fold", "method"] + metric_cols,
        [[run, r["split"].fold_id, method] + [getattr(r[method], m) for m in METRICS]
         for run, r in results for method in ("baseline", "flma")])
    _write_metric_rows(
        os.path.join(out, "comparison.csv"), ["dataset", "method"] + metric_cols,
        [[dataset.name, name] + [getattr(rep, m) for m in METRICS]
         for name, rep in (("baseline", baseline), ("flma", flma))])
    _write_metric_rows(
        os.path.join(out, "report.csv"), ["method"] + list(METRICS),
        [[name] + [getattr(rep, m) for m in METRICS]
         for name, rep in (("baseline", baseline), ("flma", flma))])

    summaries = [fold_summary(r) for _, r in results]
    corr = [s["correction"] for s in summaries]
    diagnostics = {
        "thresholds": [[s["thresholds"]["lower"], s["thresholds"]["upper"]] for s in summaries],
        "mean_thr_lower": float(np.mean([s["thresholds"]["lower"] for s in summaries])),
        "mean_thr_upper": float(np.mean([s["thresholds"]["upper"] for s in summaries])),
        "rule_counts": [s["rule_counts"] for s in summaries],
        "applications": int(sum(c["applications"] for c in corr)),
        "saturated_fraction": (
            float(sum(c["saturated_fraction"] * c["applications"] for c in corr)
                  / max(1, sum(c["applications"] for c in corr)))),
        "mean_delta": (float(sum(c["mean_delta"] * c["applications"] for c in corr)
                             / max(1, sum(c["applications"] for c in corr)))),
        "uncertain_cells": int(sum(s["partition"]["uncertain"] for s in summaries)),
        "flipped_labels": int(sum(s["flipped_labels"] for s in summaries)),
    }
    _dump_json(os.path.join(out, "report.json"), {
        "dataset": dataset.name,
        "instances": dataset.n_instances,
        "labels": dataset.n_labels,
        "baseline": baseline.as_dict(),
        "flma": flma.as_dict(),
        "improved_metrics": flma.improved_over(baseline),
        "diagnostics": diagnostics,
        "distance": "euclidean on raw features" if config.classifier == "mlknn" else None,
    })
