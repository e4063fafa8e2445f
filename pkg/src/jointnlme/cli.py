"""Command-line interface.

Subcommands: fit, simulate, replicate, diagnose, compare, classify.  All
outputs are delimited text files; every command touching randomness accepts
--seed and is bitwise reproducible given identical inputs.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .diagnostics import geweke_report, summary_table
from .evaluation import classify as classify_probs
from .evaluation import cpo_report, predict_outcome_prob, roc_auc, roc_points
from .exceptions import JointNlmeError
from .io import (
    load_chain,
    load_dataset,
    parse_config,
    parse_truth_config,
    persist_chain,
    write_dataset,
    write_table,
)
from .model import ErrorModel
from .sampler import FitConfig, run_chain
from .simulation import (
    bundled_design,
    desk_scale_config,
    load_design,
    run_replication_study,
    simulate_nondegenerate,
)

SUMMARY_HEADER = ["parameter", "mean", "sd", "q2.5", "median", "q97.5"]


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="jointnlme",
        description="Bayesian joint modeling of longitudinal profiles and a primary outcome",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit the joint model to a dataset")
    fit.add_argument("--long", required=True, help="long-format measurement CSV (id,time,y)")
    fit.add_argument("--outcomes", required=True, help="outcome CSV (id,d[,w...])")
    fit.add_argument("--config", help="flat key=value sampler configuration")
    fit.add_argument("--out-dir", default=".")
    fit.add_argument("--seed", type=int)
    fit.add_argument("--error-model", choices=[ErrorModel.INDEPENDENT, ErrorModel.CAR1])

    sim = sub.add_parser("simulate", help="simulate a dataset from a sparse design")
    sim.add_argument("--design", help="design file (default: bundled sparse design)")
    sim.add_argument("--truth", help="flat key=value truth overrides")
    sim.add_argument("--out-dir", default=".")
    sim.add_argument("--seed", type=int, default=0)

    rep = sub.add_parser("replicate", help="misspecification replication study")
    rep.add_argument("--design", help="design file (default: bundled sparse design)")
    rep.add_argument("--truth", help="flat key=value truth overrides")
    rep.add_argument("--config", help="base sampler configuration (default: desk scale)")
    rep.add_argument("--reps", type=int, default=20)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--jobs", type=int, default=1)
    rep.add_argument("--out-dir", default=".")
    rep.add_argument(
        "--error-model", choices=[ErrorModel.INDEPENDENT, ErrorModel.CAR1, "both"],
        default="both",
    )

    diag = sub.add_parser("diagnose", help="Geweke convergence table for a stored chain")
    diag.add_argument("--chain", required=True)
    diag.add_argument("--out-dir", default=".")

    comp = sub.add_parser("compare", help="CPO/LPML comparison of fitted chains")
    comp.add_argument("--long", required=True)
    comp.add_argument("--outcomes", required=True)
    comp.add_argument("--chain", action="append", required=True,
                      help="chain file; pass at least twice to compare models")
    comp.add_argument("--out-dir", default=".")

    cls = sub.add_parser("classify", help="confusion matrix, rates, AUC and ROC points")
    cls.add_argument("--chain", required=True)
    cls.add_argument("--long", required=True)
    cls.add_argument("--outcomes", required=True)
    cls.add_argument("--cutoff", type=float, default=0.5)
    cls.add_argument("--out-dir", default=".")
    return parser


def _summary_rows(store):
    return [
        (s.name, s.mean, s.sd, s.q2_5, s.median, s.q97_5)
        for s in summary_table(store)
    ]


def _print_table(header, rows):
    widths = [max(len(str(h)), *(len(_cell(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(header)]
    print("  ".join(str(h).rjust(w) for h, w in zip(header, widths)))
    for row in rows:
        print("  ".join(_cell(v).rjust(w) for v, w in zip(row, widths)))


def _cell(value):
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def _cmd_fit(args):
    data = load_dataset(args.long, args.outcomes)
    k = data[0].covariates.size
    config = parse_config(args.config, n_covariates=k) if args.config else FitConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.error_model:
        config = replace(config, error_model=args.error_model)
    store = run_chain(data, config)
    os.makedirs(args.out_dir, exist_ok=True)
    chain_path = os.path.join(args.out_dir, "chain.csv")
    persist_chain(store, chain_path)
    rows = _summary_rows(store)
    write_table(os.path.join(args.out_dir, "summary.csv"), SUMMARY_HEADER, rows)
    print(f"retained {len(store)} draws -> {chain_path}")
    acc = {key[11:]: val for key, val in store.meta.items() if key.startswith("acceptance.")}
    if acc:
        print("acceptance rates: " + ", ".join(f"{k}={v:.3f}" for k, v in sorted(acc.items())))
    _print_table(SUMMARY_HEADER, rows)
    return 0


def _load_design_arg(args):
    truth = parse_truth_config(args.truth) if getattr(args, "truth", None) else None
    if args.design:
        return load_design(args.design, truth=truth, seed=args.seed)
    return bundled_design(truth=truth, seed=args.seed)


def _cmd_simulate(args):
    design = _load_design_arg(args)
    data = simulate_nondegenerate(design, seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    long_path = os.path.join(args.out_dir, "longitudinal.csv")
    out_path = os.path.join(args.out_dir, "outcomes.csv")
    write_dataset(data, long_path, out_path)
    n_pos = sum(ind.outcome == 1.0 for ind in data)
    print(f"simulated {len(data)} individuals ({n_pos} positive) -> {long_path}, {out_path}")
    return 0


REPLICATION_HEADER = ["parameter", "true", "mean", "sd_of_means", "median",
                      "sd_of_medians", "coverage"]


def _cmd_replicate(args):
    design = _load_design_arg(args)
    if args.config:
        base = parse_config(args.config)
    else:
        base = desk_scale_config()
    variants = {}
    if args.error_model in (ErrorModel.CAR1, "both"):
        variants[ErrorModel.CAR1] = replace(base, error_model=ErrorModel.CAR1)
    if args.error_model in (ErrorModel.INDEPENDENT, "both"):
        variants[ErrorModel.INDEPENDENT] = replace(base, error_model=ErrorModel.INDEPENDENT)
    reports = run_replication_study(design, args.reps, variants, seed=args.seed, n_jobs=args.jobs)
    os.makedirs(args.out_dir, exist_ok=True)
    for variant, report in reports.items():
        rows = [tuple(r[k] for k in REPLICATION_HEADER) for r in report.rows]
        path = os.path.join(args.out_dir, f"replication_{variant}.csv")
        write_table(path, REPLICATION_HEADER, rows)
        print(f"\n[{variant}] {report.n_completed}/{report.n_requested} replicates -> {path}")
        _print_table(REPLICATION_HEADER, rows)
        metrics = report.metrics
        if len(metrics["lpml_sum"]):
            print(
                f"mean LPML(sum)={metrics['lpml_sum'].mean():.2f} "
                f"mean AUC={metrics['auc'].mean():.3f} "
                f"mean error rate={metrics['error_rate'].mean():.3f}"
            )
    metric_rows = []
    for variant, report in reports.items():
        m = report.metrics
        for i in range(len(m["lpml_sum"])):
            metric_rows.append(
                (variant, i, m["lpml_sum"][i], m["lpml_mean"][i], m["auc"][i], m["error_rate"][i])
            )
    write_table(
        os.path.join(args.out_dir, "replication_metrics.csv"),
        ["variant", "replicate", "lpml_sum", "lpml_mean", "auc", "error_rate"],
        metric_rows,
    )
    return 0


def _cmd_diagnose(args):
    store = load_chain(args.chain)
    rows = geweke_report(store)
    table = [
        (r["parameter"], r["z"], r["pass_strict_1.6"], r["pass_1.96"]) for r in rows
    ]
    header = ["parameter", "z", "pass_1.6", "pass_1.96"]
    os.makedirs(args.out_dir, exist_ok=True)
    write_table(os.path.join(args.out_dir, "geweke.csv"), header, table)
    _print_table(header, table)
    worst = max(abs(r["z"]) for r in rows)
    print(f"max |z| = {worst:.3f}")
    return 0


def _cmd_compare(args):
    if len(args.chain) < 2:
        print("compare: need at least two --chain files", file=sys.stderr)
        return 2
    data = load_dataset(args.long, args.outcomes)
    header = ["model", "lpml_mean", "lpml_sum"]
    rows = []
    for path in args.chain:
        store = load_chain(path)
        family = store.meta.get("family", "bernoulli")
        report = cpo_report(data, store, family=family)
        label = os.path.splitext(os.path.basename(path))[0]
        rows.append((label, report.lpml_mean, report.lpml_sum))
    os.makedirs(args.out_dir, exist_ok=True)
    write_table(os.path.join(args.out_dir, "lpml.csv"), header, rows)
    _print_table(header, rows)
    best = max(rows, key=lambda row: row[2])
    print(f"best fit by LPML (sum scale): {best[0]}")
    return 0


def _cmd_classify(args):
    data = load_dataset(args.long, args.outcomes)
    store = load_chain(args.chain)
    labels = np.array([ind.outcome for ind in data])
    probs = np.array([predict_outcome_prob(ind, store) for ind in data])
    report = classify_probs(probs, labels, cutoff=args.cutoff)
    auc, auc_sd = roc_auc(probs, labels)
    points = roc_points(probs, labels)
    os.makedirs(args.out_dir, exist_ok=True)
    (tp, fn), (fp, tn) = report.confusion
    write_table(
        os.path.join(args.out_dir, "classification.csv"),
        ["cutoff", "tp", "fn", "fp", "tn", "error_rate", "sensitivity", "specificity",
         "auc", "auc_sd"],
        [(report.cutoff, tp, fn, fp, tn, report.error_rate, report.sensitivity,
          report.specificity, auc, auc_sd)],
    )
    roc_path = os.path.join(args.out_dir, "roc_points.txt")
    with open(roc_path + ".tmp", "w") as fh:
        for fpr, tpr in points:
            fh.write(f"{fpr:.17g} {tpr:.17g}\n")
    os.replace(roc_path + ".tmp", roc_path)
    print("confusion matrix (rows: actual positive/negative; cols: predicted):")
    print(f"  positive: {tp:4d} {fn:4d}")
    print(f"  negative: {fp:4d} {tn:4d}")
    print(
        f"error rate {report.error_rate:.3%}, sensitivity {report.sensitivity:.3%}, "
        f"specificity {report.specificity:.3%}, AUC {auc:.3f} (sd {auc_sd:.3f})"
    )
    print(f"ROC points -> {roc_path}")
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "replicate": _cmd_replicate,
    "diagnose": _cmd_diagnose,
    "compare": _cmd_compare,
    "classify": _cmd_classify,
}


def cli_dispatch(argv):
    """Parse argv and run the matching subcommand; returns the exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (JointNlmeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
