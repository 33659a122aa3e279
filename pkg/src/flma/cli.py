"""Command line entry point: ``flma {mine,run,correct,eval}``.

Exit codes: 0 success, 1 data/processing error, 2 missing file or bad usage,
3 label names that disagree between inputs.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from .correction import CertaintyThresholds, correct, fit_thresholds
from .errors import DataFormatError, FLMAError, LabelMismatchError
from .metrics import METRICS, evaluate
from .mining import clean_rules, mine_cp_ca, read_rules, rule_file_labels, write_rules
from .mlknn import read_scores, write_matrix_csv
from .pipeline import RunConfig, read_config_file, run_cross_validation

log = logging.getLogger("flma")

EXIT_ERROR = 1
EXIT_MISSING = 2
EXIT_LABELS = 3


def _add_dataset_args(p):
    p.add_argument("--data", help="ARFF or CSV dataset")
    p.add_argument("--label-spec", help="Mulan XML file naming the label attributes (ARFF)")
    p.add_argument("--label-count", type=int, help="number of trailing label columns (CSV)")


def _add_mining_args(p):
    g = p.add_argument_group("mining")
    g.add_argument("--min-sup-cp", type=float)
    g.add_argument("--min-conf-cp", type=float)
    g.add_argument("--min-sup-ca", type=float)
    g.add_argument("--min-conf-ca", type=float)
    g.add_argument("--max-labelset-size", type=int)
    g.add_argument("--use-frequency-filter", action="store_true",
                   help="mine CP rules only over labels with above-average support")


def _add_threshold_args(p):
    p.add_argument("--thr-lower", type=float, help="fixed lower certainty threshold")
    p.add_argument("--thr-upper", type=float, help="fixed upper certainty threshold")


def build_parser():
    parser = argparse.ArgumentParser(prog="flma", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    mine = sub.add_parser("mine", help="mine CP/CA rules from a dataset's labels",
                          argument_default=argparse.SUPPRESS)
    mine.add_argument("--config", help="JSON or key=value file; flags take precedence")
    _add_dataset_args(mine)
    _add_mining_args(mine)
    mine.add_argument("--out", required=True, help="rule file to write")
    mine.add_argument("--clean", action="store_true",
                      help="write the merged, sorted rule list instead of raw CP then CA")

    run = sub.add_parser("run", help="cross-validated baseline vs FLMA comparison",
                         argument_default=argparse.SUPPRESS)
    run.add_argument("--config", help="JSON or key=value file; flags take precedence")
    _add_dataset_args(run)
    _add_mining_args(run)
    _add_threshold_args(run)
    run.add_argument("--classifier", choices=("mlknn", "external"))
    run.add_argument("--scores", help="external score CSV covering every dataset row")
    run.add_argument("--scores-header", action="store_true")
    run.add_argument("--k", type=int, help="ML-KNN neighbours (default 10)")
    run.add_argument("--smoothing", type=float, help="ML-KNN smoothing s (default 1)")
    run.add_argument("--folds", type=int)
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--output", help="output directory")
    run.add_argument("--trace", action="store_true", help="write per-fold correction traces")
    run.add_argument("--jobs", type=int, help="folds processed in parallel")

    cor = sub.add_parser("correct", help="correct an external score matrix with a rule file")
    cor.add_argument("--scores", required=True, help="score CSV with a header of label names")
    cor.add_argument("--rules", required=True)
    _add_threshold_args(cor)
    cor.add_argument("--fit-scores", help="fit thresholds on this score CSV (default: --scores)")
    cor.add_argument("--out-scores", required=True)
    cor.add_argument("--out-labels", required=True)
    cor.add_argument("--trace", help="write the correction trace here")

    ev = sub.add_parser("eval", help="evaluate predictions against ground truth")
    ev.add_argument("--pred", required=True, help="binary prediction CSV")
    ev.add_argument("--scores", required=True, help="soft score CSV")
    ev.add_argument("--truth", required=True, help="binary ground-truth CSV")
    ev.add_argument("--no-header", action="store_true", help="CSV files have no header row")
    ev.add_argument("--out", help="write the report here (.json or .csv)")
    return parser


def resolve_config(args):
    """Defaults < config file < explicit flags."""
    values = {}
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise FileNotFoundError(args.config)
        values.update(read_config_file(args.config))
    flags = {k: v for k, v in vars(args).items()
             if k not in ("command", "config", "verbose", "out", "clean")}
    values.update(flags)
    return RunConfig.from_mapping(values)


def _require_data(config):
    if not config.data:
        raise ValueError("no dataset given (--data)")
    for path in (config.data, config.label_spec):
        if path and not os.path.exists(path):
            raise FileNotFoundError(path)


def cmd_mine(args):
    from .data import load_dataset

    config = resolve_config(args)
    _require_data(config)
    dataset = load_dataset(config.data, config.label_spec, config.label_count)
    params = config.mining_params()
    cp, ca = mine_cp_ca(dataset, params)
    rules = clean_rules(cp, ca) if getattr(args, "clean", False) else cp + ca
    write_rules(args.out, rules, dataset.label_names)
    summary = {
        "dataset": dataset.name,
        "instances": dataset.n_instances,
        "labels": dataset.n_labels,
        "cp_rules": len(cp),
        "ca_rules": len(ca),
        "written": len(rules),
        "params": {
            "min_sup_cp": params.min_sup_cp, "min_conf_cp": params.min_conf_cp,
            "min_sup_ca": params.min_sup_ca, "min_conf_ca": params.min_conf_ca,
            "max_labelset_size": params.max_labelset_size,
            "use_frequency_filter": params.use_frequency_filter,
        },
    }
    with open(args.out + ".summary.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_run(args):
    config = resolve_config(args)
    _require_data(config)
    if config.scores and not os.path.exists(config.scores):
        raise FileNotFoundError(config.scores)
    summary = run_cross_validation(config)
    if "flma" in summary:
        for name in ("baseline", "flma"):
            rep = summary[name]
            print(name.ljust(9), " ".join(f"{m}={getattr(rep, m):.4f}" for m in METRICS))
    if summary["failed"]:
        for run, fold, _ in summary["failed"]:
            print(f"run {run} fold {fold} failed; see its error.txt", file=sys.stderr)
        return EXIT_ERROR
    return 0


def cmd_correct(args):
    for path in (args.scores, args.rules, args.fit_scores):
        if path and not os.path.exists(path):
            raise FileNotFoundError(path)
    scores, names = read_scores(args.scores, header=True)
    unknown = rule_file_labels(args.rules) - set(names)
    if unknown:
        raise LabelMismatchError(
            f"rule file {args.rules} names labels absent from the score header: {sorted(unknown)}")
    rules = clean_rules(*_split_polarity(read_rules(args.rules, names)))
    if args.thr_lower is not None and args.thr_upper is not None:
        thresholds = CertaintyThresholds.fixed(args.thr_lower, args.thr_upper)
    else:
        fit_on = scores
        if args.fit_scores:
            fit_on = read_scores(args.fit_scores, len(names), header=True, label_names=names)[0]
        thresholds = fit_thresholds(fit_on, args.thr_lower, args.thr_upper)
    corrected, labels, trace = correct(scores, rules, thresholds)
    write_matrix_csv(args.out_scores, corrected, names)
    write_matrix_csv(args.out_labels, labels, names)
    if args.trace:
        trace.write(args.trace, names)
    print(json.dumps({"thr_lower": thresholds.thr_lower, "thr_upper": thresholds.thr_upper,
                      "rules": len(rules), **trace.summary()}, sort_keys=True))
    return 0


def _split_polarity(rules):
    return [r for r in rules if r.polarity == "CP"], [r for r in rules if r.polarity == "CA"]


def _read_binary(path, header):
    matrix, names = read_scores(path, header=header)
    if not np.isin(matrix, (0.0, 1.0)).all():
        raise DataFormatError("expected a binary matrix", path)
    return matrix.astype(np.int8), names


def cmd_eval(args):
    for path in (args.pred, args.scores, args.truth):
        if not os.path.exists(path):
            raise FileNotFoundError(path)
    header = not args.no_header
    pred, pred_names = _read_binary(args.pred, header)
    truth, truth_names = _read_binary(args.truth, header)
    scores, score_names = read_scores(args.scores, header=header)
    if header and not (pred_names == truth_names == score_names):
        raise LabelMismatchError("label names differ between prediction, score and truth files")
    report = evaluate(pred, scores, truth)
    if args.out:
        if args.out.endswith(".csv"):
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(",".join(METRICS) + "\n")
                fh.write(",".join(repr(getattr(report, m)) for m in METRICS) + "\n")
        else:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
    print(json.dumps(report.as_dict(), sort_keys=True))
    return 0


COMMANDS = {"mine": cmd_mine, "run": cmd_run, "correct": cmd_correct, "eval": cmd_eval}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"flma: error: file not found: {exc.filename or exc.args[0]}", file=sys.stderr)
        return EXIT_MISSING
    except LabelMismatchError as exc:
        print(f"flma: error: {exc}", file=sys.stderr)
        return EXIT_LABELS
    except (FLMAError, ValueError, OSError) as exc:
        print(f"flma: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
