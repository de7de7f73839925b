"""``incomenet`` command line: synth, ingest, homophily, infer, evaluate.

Exit codes: 0 success, 2 usage / format / config errors, 3 statistically
degenerate input (too few labeled edges, a missing class, ...).  Every JSON
output carries the effective configuration and the package version.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .data_model import SCHEMAS, schema_to_dict
from .errors import (
    ConfigError,
    DuplicateClientError,
    FormatError,
    InsufficientEvidenceError,
    InvalidInputError,
    NumericError,
    UndefinedCorrelationError,
    UndefinedRateError,
)
from .evaluation import evaluate_binary, evaluate_multiclass, make_splits
from .graph import (
    CountOptions,
    build_graph,
    labeled_edge_pairs,
    neighbor_count_matrix,
    read_snapshot,
    write_snapshot,
)
from .inference import beta_scores, dirichlet_scores, majority_votes, random_predictions
from .ingestion import FilterConfig, apply_filters, income_by_age_summary, join, parse_bank, parse_cdr
from .stats import permutation_test, spearman
from .synthgen import SynthConfig, generate

log = logging.getLogger("incomenet")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3

MODELS = ("beta", "dirichlet", "majority", "random")


class _Degenerate(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _effective_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


def _dump_json(doc: dict, path: Optional[str] = None):
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _require_out(args) -> str:
    if not args.out:
        raise ConfigError(f"{args.command} needs --out DIR")
    return args.out


def _count_options(args) -> CountOptions:
    return CountOptions(
        use_sms=args.include_sms,
        bidirectional=args.bidirectional,
        distinct_contacts=args.distinct_contacts,
    )


def _load_snapshot(args):
    schema = SCHEMAS[args.schema] if args.schema else None
    for name in ("nodes.csv", "edges.csv", "snapshot.json"):
        path = os.path.join(args.snapshot, name)
        if not os.path.isfile(path):
            raise FormatError("missing snapshot file", path=path)
    return read_snapshot(args.snapshot, schema)


def _fmt(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    out = _require_out(args)
    schema = SCHEMAS[args.schema or "binary"]
    cfg = SynthConfig(
        n_users=args.n_users,
        labeled_fraction=args.labeled_fraction,
        homophily=args.homophily,
        mean_degree=args.mean_degree,
        calls_per_edge_mean=args.calls_per_edge,
        income_mu=float(np.log(args.income_median)) if args.income_median > 0 else float("nan"),
        income_sigma=args.income_sigma,
        sms_fraction=args.sms_fraction,
        seed=args.seed,
    )
    cfg.validate(schema)
    data = generate(cfg, schema)
    data.write(out)
    _dump_json(
        {
            "version": __version__,
            "config": _effective_config(args),
            "synth_config": cfg.to_dict(),
            "schema": schema_to_dict(schema),
            "n_users": int(data.ids.size),
            "n_labeled": int(np.sum(data.labeled)),
            "n_events": data.n_events,
        },
        os.path.join(out, "synth.json"),
    )
    log.info("wrote %d users and %d events to %s", data.ids.size, data.n_events, out)
    return EXIT_OK


def cmd_ingest(args) -> int:
    out = _require_out(args)
    schema = SCHEMAS[args.schema or "binary"]
    key = args.hash_key.encode() if args.hash_key else None
    fcfg = FilterConfig(
        min_calls=args.min_calls,
        min_income=args.min_income,
        top_percentile_cut=args.top_cut,
        min_calls_mode=args.min_calls_mode,
        count_sms=args.count_sms,
        cascade=args.cascade,
    )
    for path in (args.cdr, args.bank):
        if not os.path.isfile(path):
            raise FormatError("input file not found", path=path)

    # everything is validated before the first byte is written
    with open(args.cdr, newline="") as fh:
        records, cdr_report = parse_cdr(fh, key=key, source=args.cdr)
    with open(args.bank, newline="") as fh:
        clients, bank_report = parse_bank(fh, key=key, source=args.bank)
    joined = join(records, clients)
    filtered, freport = apply_filters(joined, fcfg, schema)
    g = build_graph(filtered, schema)
    ages = income_by_age_summary(filtered.clients)

    config = _effective_config(args)
    config.pop("hash_key", None)  # never persist the pseudonymization key
    config["hashed"] = key is not None
    write_snapshot(g, out, {"version": __version__, "config": config})
    with open(os.path.join(out, "age_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["age_lo", "age_hi", "n", "min", "q1", "median", "q3", "max"])
        for b in ages:
            w.writerow([b.lo, b.hi, b.n, _fmt(b.min), _fmt(b.q1), _fmt(b.median), _fmt(b.q3), _fmt(b.max)])
    report = {
        "version": __version__,
        "config": config,
        "parse": {"cdr": cdr_report.to_dict(), "bank": bank_report.to_dict()},
        "join": {
            "records": len(joined.records),
            "clients_in": len(clients),
            "clients_matched": len(joined.clients),
        },
        "filters": freport.to_dict(),
        "graph": {"n_nodes": g.n_nodes, "n_edges": g.n_edges, "n_labeled": int(np.sum(g.labeled_mask()))},
    }
    _dump_json(report, args.report)
    return EXIT_OK


def cmd_homophily(args) -> int:
    g = _load_snapshot(args)
    pairs, incomes = labeled_edge_pairs(g, args.include_sms)
    if pairs.shape[0] < 2:
        raise _Degenerate(f"need >= 2 edges between labeled users, found {pairs.shape[0]}")
    r = spearman(incomes[pairs[:, 0]], incomes[pairs[:, 1]])
    p = permutation_test(pairs, incomes, m=args.permutations, seed=args.seed, threads=args.threads)
    doc = {
        "version": __version__,
        "config": _effective_config(args),
        "r_s": r,
        "p_value": p,
        "n_edges": int(pairs.shape[0]),
        "n_users": int(incomes.size),
        "permutations": args.permutations,
    }
    _dump_json(doc)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _dump_json(doc, os.path.join(args.out, "homophily.json"))
    return EXIT_OK


def cmd_infer(args) -> int:
    out = _require_out(args)
    g = _load_snapshot(args)
    if args.model == "beta" and g.k != 2:
        raise ConfigError("model 'beta' needs the binary schema; use 'dirichlet' for k > 2")
    if not 0.0 <= args.tau <= 1.0:
        raise ConfigError("--tau must be in [0, 1]")
    opts = _count_options(args)
    counts = neighbor_count_matrix(g, None, opts)
    candidates = np.flatnonzero(~g.labeled_mask())
    covered = counts[candidates].sum(axis=1) >= 1
    users = candidates[covered]
    uncovered = candidates[~covered]
    a = counts[users]
    keys = g.ids[users].tolist()

    if users.size == 0:
        score = np.empty(0)
        predicted = np.empty(0, dtype=np.int64)
    elif args.model == "beta":
        score = beta_scores(a, args.quantile, args.prior_strength, args.literal_alpha_order, args.threads)
        predicted = np.where(score > args.tau, 2, 1)
    elif args.model == "dirichlet":
        mat = dirichlet_scores(a, args.quantile, args.prior_strength, args.threads)
        predicted = np.argmax(mat, axis=1) + 1
        score = mat[np.arange(users.size), predicted - 1]
    elif args.model == "majority":
        predicted = majority_votes(a, args.seed, keys)
        score = a[np.arange(users.size), predicted - 1] / a.sum(axis=1)
    else:
        predicted = random_predictions(g.k, args.seed, keys)
        score = np.full(users.size, 1.0 / g.k)

    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "predictions.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "score", "predicted", "true_label"])
        for u, s, p in zip(keys, score.tolist(), predicted.tolist()):
            w.writerow([u, repr(s), p, ""])
    with open(os.path.join(out, "uncovered.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user"])
        for u in g.ids[uncovered].tolist():
            w.writerow([u])
    _dump_json(
        {
            "version": __version__,
            "config": _effective_config(args),
            "n_predicted": int(users.size),
            "n_uncovered": int(uncovered.size),
            "predicted_counts": {str(i): int(np.sum(predicted == i)) for i in range(1, g.k + 1)},
        },
        os.path.join(out, "infer.json"),
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out = _require_out(args)
    g = _load_snapshot(args)
    model = args.model or ("beta" if g.k == 2 else "dirichlet")
    if model == "beta" and g.k != 2:
        raise ConfigError("model 'beta' needs the binary schema")
    if args.tau_grid_size < 2:
        raise ConfigError("--tau-grid-size must be >= 2")
    opts = _count_options(args)
    grid = np.linspace(0.0, 1.0, args.tau_grid_size)
    splits = make_splits(g, args.kfold, args.seed, opts)
    if not splits:
        raise _Degenerate("no labeled users with labeled contacts to evaluate")
    common = dict(tau_grid=grid, q=args.quantile, seed=args.seed, opts=opts,
                  prior_strength=args.prior_strength, threads=args.threads)

    os.makedirs(out, exist_ok=True)
    doc = {"version": __version__, "config": dict(_effective_config(args), model=model), "model": model}
    if model == "beta":
        rep = evaluate_binary(g, splits, tau=args.tau, literal_alpha_order=args.literal_alpha_order, **common)
        rep.roc.write_csv(os.path.join(out, "roc.csv"))
        rep.roc_grid.write_csv(os.path.join(out, "roc_grid.csv"))
        doc.update(rep.to_dict())
        _dump_json(doc, os.path.join(out, "report.json"))
        return EXIT_OK

    rep = evaluate_multiclass(g, splits, **common)
    for i, (curve, curve_grid) in enumerate(zip(rep.per_category, rep.per_category_grid), start=1):
        if curve is not None:
            curve.write_csv(os.path.join(out, f"roc_{i}.csv"))
            curve_grid.write_csv(os.path.join(out, f"roc_grid_{i}.csv"))
    doc.update(rep.to_dict())
    _dump_json(doc, os.path.join(out, "report.json"))
    missing = [i for i, c in enumerate(rep.per_category, start=1) if c is None]
    if missing:
        log.error("ROC undefined for categories %s (no positives or no negatives)", missing)
        return EXIT_DEGENERATE
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_count_flags(p):
    p.add_argument("--include-sms", action="store_true", help="count texts as contacts too")
    p.add_argument("--bidirectional", action="store_true", help="also count incoming calls")
    p.add_argument("--distinct-contacts", action="store_true", help="count contacts, not calls")


def _add_model_flags(p):
    p.add_argument("--quantile", type=float, default=0.05, help="posterior quantile used as score")
    p.add_argument("--tau", type=float, default=0.4, help="binary decision threshold on the score")
    p.add_argument("--prior-strength", type=float, default=1.0, help="pseudo-count added per category")
    p.add_argument("--literal-alpha-order", action="store_true",
                   help="score Beta(a_low+1, a_high+1) instead of Beta(a_high+1, a_low+1)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--schema", choices=sorted(SCHEMAS), default=None,
                        help="income schema (default: binary, or the snapshot's own)")

    parser = argparse.ArgumentParser(prog="incomenet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"incomenet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic CDR + bank data set")
    p.add_argument("--n-users", type=int, default=2000)
    p.add_argument("--labeled-fraction", type=float, default=0.5)
    p.add_argument("--homophily", type=float, default=0.6)
    p.add_argument("--mean-degree", type=float, default=SynthConfig.mean_degree)
    p.add_argument("--calls-per-edge", type=float, default=SynthConfig.calls_per_edge_mean)
    p.add_argument("--income-median", type=float, default=340.0)
    p.add_argument("--income-sigma", type=float, default=1.0)
    p.add_argument("--sms-fraction", type=float, default=SynthConfig.sms_fraction)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="parse, join and filter raw files into a snapshot")
    p.add_argument("--cdr", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--hash-key", default=None, help="HMAC key; when set, phone columns are raw numbers")
    p.add_argument("--min-calls", type=int, default=5, help="users need more than this many calls")
    p.add_argument("--min-calls-mode", choices=["total", "each"], default="total")
    p.add_argument("--count-sms", action="store_true")
    p.add_argument("--min-income", type=float, default=54.0)
    p.add_argument("--top-cut", type=float, default=0.01)
    p.add_argument("--cascade", action="store_true", help="repeat the call-count filter to a fixpoint")
    p.add_argument("--report", default=None, help="write the filter report here instead of stdout")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("homophily", parents=[common], help="Spearman income correlation over edges")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--permutations", type=int, default=1000)
    p.add_argument("--include-sms", action="store_true")
    p.set_defaults(func=cmd_homophily)

    p = sub.add_parser("infer", parents=[common], help="predict categories of unlabeled users")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--model", choices=MODELS, default="beta")
    _add_model_flags(p)
    _add_count_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", parents=[common], help="held-out ROC and accuracy on labeled users")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--model", choices=["beta", "dirichlet"], default=None)
    p.add_argument("--kfold", type=int, default=5)
    p.add_argument("--tau-grid-size", type=int, default=101)
    _add_model_flags(p)
    _add_count_flags(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except DuplicateClientError as exc:
        for phone in exc.duplicates:
            print(f"duplicate: {phone}", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ConfigError, InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (_Degenerate, UndefinedCorrelationError, UndefinedRateError, InsufficientEvidenceError) as exc:
        print(f"degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
