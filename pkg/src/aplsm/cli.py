"""Command line interface.

Subcommands::

    simulate --spec spec.json --out DIR
    fit      --social Y_I.csv --attributes Y_IA.csv --model {lsm,blsm,aplsm}
             --dim D --seed S --out DIR
    evaluate --fit fit.json --truth DIR
    cluster  --fit fit.json --k K --starts 100
    report   --fit fit.json

Exit codes: 0 success, 2 unreadable or invalid input, 3 numerical failure.
``JLS_THREADS`` caps the number of worker processes/threads.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import cluster_fit, cluster_link_summaries
from .io import (ParseError, SchemaVersionError, load_fit, read_attribute_matrix,
                 read_social_network, read_truth, save_fit, write_positions,
                 write_rank_pairs, write_replicate_data, write_replication,
                 write_rows)
from .metrics import (average_absolute_error, congruence_coefficient,
                      orthogonal_align, pairwise_distance_ratios,
                      rank_diagnostics, ratio_quantiles, roc_auc)
from .model import LatentConfig
from .reference import reference_report
from .simulation import SimulationSpec, generate_replicate, run_replication_study
from .vbem import (FitOptions, NumericalError, fit_aplsm, fit_blsm, fit_lsm,
                   posterior_link_probabilities)

logger = logging.getLogger("aplsm")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _options_from_args(args):
    return FitOptions(max_iterations=args.max_iterations, seed=args.seed,
                      convergence_ratio=args.convergence_ratio,
                      abs_tolerance=args.abs_tolerance, ridge=args.ridge,
                      attribute_update=args.attribute_update)


def _print_rows(rows, out=None):
    out = out or sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["metric", "value"])
    for k, v in rows.items():
        w.writerow([k, repr(float(v)) if isinstance(v, (float, np.floating)) else v])


# --------------------------------------------------------------------------
# simulate

def cmd_simulate(args):
    try:
        with open(args.spec) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(args.spec, None, f"cannot read file: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(args.spec, exc.lineno, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError(args.spec, None, "spec must be a JSON object")
    fit_opts = doc.pop("fit_options", {}) or {}
    try:
        spec = SimulationSpec.from_dict(doc)
        options = FitOptions(**fit_opts)
    except (TypeError, ValueError) as exc:
        raise ParseError(args.spec, None, str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_replication_study(spec, options, n_jobs=args.jobs)
    write_replication(out, result)
    with open(out / "spec.json", "w") as fh:
        json.dump(dict(spec.to_dict(), fit_options=fit_opts), fh, indent=1,
                  sort_keys=True)
        fh.write("\n")
    for i in range(min(args.save_data, spec.n_replications)):
        write_replicate_data(out / "replicates" / f"rep_{i:04d}",
                             generate_replicate(spec, i), spec)
    _print_rows(result.summary())
    return EXIT_OK


# --------------------------------------------------------------------------
# fit

def _load_inputs(args):
    yi = yia = None
    if args.model in ("lsm", "aplsm"):
        if not args.social:
            raise ParseError("<args>", None, f"--social is required for {args.model}")
        yi = read_social_network(args.social, args.social_format, args.directed)
    if args.model in ("blsm", "aplsm"):
        if not args.attributes:
            raise ParseError("<args>", None, f"--attributes is required for {args.model}")
        yia = read_attribute_matrix(args.attributes)
    if yi is not None and yia is not None and yi.n_persons != yia.n_persons:
        raise ParseError(args.attributes, None,
                         f"{yia.n_persons} persons, the network has {yi.n_persons}")
    return yi, yia


def _in_sample_auc(probs, data):
    if probs is None or data is None:
        return float("nan")
    entries = data.entries
    keep = ~np.isnan(entries)
    try:
        return roc_auc(probs[keep], entries[keep]).auc
    except ValueError:
        return float("nan")


def cmd_fit(args):
    yi, yia = _load_inputs(args)
    try:
        config = LatentConfig(args.dim, args.prior_var_person, args.prior_var_attribute)
        options = _options_from_args(args)
    except ValueError as exc:
        raise ParseError("<args>", None, str(exc)) from exc
    if args.model == "lsm":
        result = fit_lsm(yi, config, options)
    elif args.model == "blsm":
        result = fit_blsm(yia, config, options)
    else:
        result = fit_aplsm(yi, yia, config, options)
    names = yia.names if yia is not None else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {"social": args.social, "attributes": args.attributes,
              "social_format": args.social_format, "directed": args.directed}
    save_fit(result, out / "fit.json", names, extra={"inputs": inputs})
    write_positions(out / "positions.csv", result, names)
    write_rows(out / "trace.csv",
               [dict(iteration=i + 1, objective=v)
                for i, v in enumerate(result.objective_trace)],
               ["iteration", "objective"])
    social_p, attr_p = posterior_link_probabilities(result)
    metrics = {
        "model": result.model_kind,
        "iterations": result.iterations_run,
        "converged": str(result.converged).lower(),
        "final_objective": result.final_objective,
        "alpha0": np.nan if result.state.alpha0 is None else result.state.alpha0,
        "alpha1": np.nan if result.state.alpha1 is None else result.state.alpha1,
        "auc_social": _in_sample_auc(social_p, yi),
        "auc_attributes": _in_sample_auc(attr_p, yia),
    }
    write_rows(out / "metrics.csv",
               [dict(metric=k, value=v) for k, v in metrics.items()],
               ["metric", "value"])
    write_rank_pairs(out / "rank_pairs.csv", rank_diagnostics(result, yi, yia))
    _print_rows(metrics)
    return EXIT_OK


# --------------------------------------------------------------------------
# evaluate

def evaluate_fit(result, truth) -> dict:
    social_p, attr_p = posterior_link_probabilities(result)
    s = result.state
    rows = {}
    if social_p is not None and "prob_social" in truth:
        rows["aae_social"] = average_absolute_error(social_p, truth["prob_social"], True)
    if attr_p is not None and "prob_attr" in truth:
        rows["aae_attributes"] = average_absolute_error(attr_p, truth["prob_attr"])
    meta = truth.get("meta", {})
    if s.alpha0 is not None and "alpha0" in meta:
        rows["alpha0_error"] = s.alpha0 - meta["alpha0"]
    if s.alpha1 is not None and "alpha1" in meta:
        rows["alpha1_error"] = s.alpha1 - meta["alpha1"]
    for side, est, key in (("person", s.mean_persons, "persons"),
                           ("attribute", s.mean_attributes, "attributes")):
        if est is None or key not in truth:
            continue
        true_pos = truth[key]
        if true_pos.shape != est.shape:
            raise ValueError(f"true {key} have shape {true_pos.shape}, fit has {est.shape}")
        for q, v in zip((5, 25, 50, 75, 95),
                        ratio_quantiles(pairwise_distance_ratios(est, true_pos))):
            rows[f"ratio_{side}_q{q:02d}"] = v
        aligned = orthogonal_align(est, true_pos).aligned
        rows[f"congruence_{side}"] = congruence_coefficient(
            aligned - true_pos.mean(axis=0), true_pos - true_pos.mean(axis=0))
    return rows


def cmd_evaluate(args):
    result, _ = load_fit(args.fit)
    truth = read_truth(args.truth)
    try:
        rows = evaluate_fit(result, truth)
    except ValueError as exc:
        raise ParseError(args.truth, None, str(exc)) from exc
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_rows(out / "metrics.csv",
                   [dict(metric=k, value=v) for k, v in rows.items()],
                   ["metric", "value"])
    _print_rows(rows)
    return EXIT_OK


# --------------------------------------------------------------------------
# cluster

def cmd_cluster(args):
    result, names = load_fit(args.fit)
    n_points = result.state.n_persons + result.state.n_attributes
    if not 1 <= args.k <= n_points:
        raise ParseError("<args>", None, f"--k must lie in 1..{n_points}")
    if args.starts < 1:
        raise ParseError("<args>", None, "--starts must be >= 1")
    assignment = cluster_fit(result, args.k, n_starts=args.starts, seed=args.seed,
                             n_jobs=args.jobs)
    summary = cluster_link_summaries(assignment, result, names)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        counters = {"person": 0, "attribute": 0}
        for kind, label in zip(assignment.kinds, assignment.labels):
            counters[kind] += 1
            idx = counters[kind]
            name = (names[idx - 1] if kind == "attribute" and names
                    else f"{kind}{idx}")
            rows.append(dict(kind=kind, index=idx, name=name, cluster=int(label) + 1))
        write_rows(out / "clusters.csv", rows, ["kind", "index", "name", "cluster"])
        long = []
        for (a, b), probs in summary.social.items():
            long += [dict(block="social", cluster_a=a + 1, cluster_b=b + 1,
                          attribute="", probability=p) for p in probs]
        for (name, c), probs in summary.attributes.items():
            long += [dict(block="attribute", cluster_a=c + 1, cluster_b="",
                          attribute=name, probability=p) for p in probs]
        write_rows(out / "plot_cluster_probabilities.csv", long,
                   ["block", "cluster_a", "cluster_b", "attribute", "probability"])
    rows = {"k": assignment.k, "starts": assignment.n_starts,
            "objective": assignment.objective,
            "variance_explained": assignment.variance_explained}
    for (a, b), med in summary.social_medians.items():
        rows[f"median_social_{a + 1}_{b + 1}"] = med
    _print_rows(rows)
    return EXIT_OK


# --------------------------------------------------------------------------
# report

def cmd_report(args):
    result, names = load_fit(args.fit)
    s = result.state
    rows = {
        "model": result.model_kind,
        "persons": s.n_persons,
        "attributes": s.n_attributes,
        "dim": s.dim,
        "iterations": result.iterations_run,
        "converged": str(result.converged).lower(),
        "initial_objective": result.initial_objective,
        "final_objective": result.final_objective,
    }
    if s.alpha0 is not None:
        rows["alpha0"] = s.alpha0
    if s.alpha1 is not None:
        rows["alpha1"] = s.alpha1
    rows["trace_cov_persons"] = float(np.trace(s.cov_persons))
    if s.cov_attributes is not None:
        rows["trace_cov_attributes"] = float(np.trace(s.cov_attributes))
    for key, val in sorted(result.diagnostics.items()):
        rows[f"diag_{key}"] = val
    _print_rows(rows)
    if args.reference:
        if not (args.social and args.attributes):
            raise ParseError("<args>", None,
                             "--reference needs --social and --attributes")
        yi = read_social_network(args.social, args.social_format, args.directed)
        yia = read_attribute_matrix(args.attributes)
        options = result.options or FitOptions()
        table = reference_report(yi, yia, dim=s.dim, options=options,
                                 n_starts=args.starts, seed=args.seed)
        print()
        print("reference comparison (informational; flagged if |deviation| > 0.15)")
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["quantity", "reference", "observed", "deviation", "flag"])
        for row in table:
            w.writerow([row.name, row.reference, f"{row.observed:.4f}",
                        f"{row.deviation:.4f}", "REVIEW" if row.flagged else "ok"])
    return EXIT_OK


# --------------------------------------------------------------------------

def _add_fit_controls(p):
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--convergence-ratio", type=float, default=0.999999)
    p.add_argument("--abs-tolerance", type=float, default=1e-6)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--attribute-update", choices=("newton", "printed"),
                   default="newton")


def _add_network_format(p):
    p.add_argument("--social-format", choices=("dense_csv", "edge_list"),
                   default="dense_csv")
    p.add_argument("--directed", action="store_true",
                   help="treat the social network as directed")


def build_parser():
    parser = _Parser(prog="aplsm", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a replication study")
    p.add_argument("--spec", required=True, help="JSON simulation spec")
    p.add_argument("--out", required=True)
    p.add_argument("--save-data", type=int, default=1,
                   help="number of replicates whose data/truth files are written")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit LSM, BLSM or APLSM")
    p.add_argument("--social")
    p.add_argument("--attributes")
    p.add_argument("--model", choices=("lsm", "blsm", "aplsm"), default="aplsm")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prior-var-person", type=float, default=1.0)
    p.add_argument("--prior-var-attribute", type=float, default=1.0)
    p.add_argument("--out", required=True)
    _add_network_format(p)
    _add_fit_controls(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="compare a fit with simulation truth")
    p.add_argument("--fit", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cluster", help="joint k-means of fitted positions")
    p.add_argument("--fit", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--starts", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("report", help="summarise a fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--reference", choices=("french-elite",),
                   help="compare a full analysis with published values")
    p.add_argument("--social")
    p.add_argument("--attributes")
    p.add_argument("--starts", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    _add_network_format(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ParseError, SchemaVersionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # remaining validation errors come from user-supplied values
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
