"""Income-category inference on call-detail-record graphs.

Build a communication graph from CDR and bank CSVs, measure income
homophily, and score unlabeled users with Beta/Dirichlet posteriors over
their contacts' income categories.
"""

__version__ = "0.1.0"

from .data_model import (
    BINARY_SCHEMA,
    FIVE_CLASS_SCHEMA,
    BankClient,
    CallKind,
    CategorySchema,
    CdrRecord,
    categorize,
)
from .evaluation import evaluate_binary, evaluate_multiclass, make_splits, roc_sweep
from .graph import CommGraph, CountOptions, build_graph, inference_set, neighbor_counts
from .inference import beta_classify, dirichlet_classify, majority_vote, random_baseline
from .ingestion import FilterConfig, anonymize, apply_filters, join, parse_bank, parse_cdr
from .stats import BetaParams, DirichletParams, beta_quantile, permutation_test, reg_inc_beta, spearman
from .synthgen import SynthConfig, calibrate_homophily, generate, measured_homophily

__all__ = [
    "BINARY_SCHEMA",
    "FIVE_CLASS_SCHEMA",
    "BankClient",
    "BetaParams",
    "CallKind",
    "CategorySchema",
    "CdrRecord",
    "CommGraph",
    "CountOptions",
    "DirichletParams",
    "FilterConfig",
    "SynthConfig",
    "anonymize",
    "apply_filters",
    "beta_classify",
    "beta_quantile",
    "build_graph",
    "calibrate_homophily",
    "categorize",
    "dirichlet_classify",
    "evaluate_binary",
    "evaluate_multiclass",
    "generate",
    "inference_set",
    "join",
    "majority_vote",
    "make_splits",
    "measured_homophily",
    "neighbor_counts",
    "parse_bank",
    "parse_cdr",
    "permutation_test",
    "random_baseline",
    "reg_inc_beta",
    "roc_sweep",
    "spearman",
]
