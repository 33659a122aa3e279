"""Frequent label-set mining and association (FLMA).

Mine co-presence (CP) and co-absence (CA) rules from multi-label training
labels and use them to correct the uncertain soft scores of any multi-label
classifier before thresholding.
"""
from .correction import (CertaintyPartition, CertaintyThresholds, CorrectionTrace, apply_rules,
                         compute_delta, correct, fit_thresholds, harden, partition,
                         threshold_feet)
from .data import (FoldSplit, MultiLabelDataset, complement_labels, filter_frequent_labels,
                   kfold_split, label_support, load_csv, load_mulan_arff)
from .errors import DataFormatError, FLMAError, LabelMismatchError
from .metrics import EvaluationReport, aggregate, evaluate
from .mining import (CA, CP, AssociationRule, FPTree, FrequentLabelSet, MiningParams,
                     build_fp_tree, clean_rules, enumerate_frequent_labelsets_naive,
                     extract_frequent_labelsets, generate_rules, mine_cp_ca, read_rules,
                     write_rules)
from .mlknn import MLKnnModel, fit_mlknn, load_external_scores, predict_scores_mlknn

__version__ = "0.1.0"
