"""Command-line entry point: ``amplowdeg <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .amp import bayes_amp
from .experiments import RunConfig, figure1_sweep, lowdeg_vs_amp_report, version_string
from .lowdeg import PsiSpec, estimate_c_M, lowdeg_optimal_mse, optimal_mse_se
from .model import sample_goe, sample_observation
from .mp import verify_tree_to_amp
from .prior import InvalidParameter, prior_from_spec
from .scalar_theory import q_bayes, se_trajectory
from .trees import GuardExceeded, enumerate_rooted_trees

DEFAULT_PRIOR = "three_point:s=1,eps=0.01"


def _writer(out):
    return csv.writer(out, lineterminator="\n")


def _g(x) -> str:
    return format(float(x), ".17g")


def cmd_theory(args) -> int:
    prior = prior_from_spec(args.prior)
    trace = se_trajectory(prior)
    qb, profile = q_bayes(prior, grid_size=args.grid_size)
    w = _writer(sys.stdout)
    w.writerow(["quantity", "value"])
    w.writerow(["q_amp", _g(trace.q_amp)])
    w.writerow(["q_bayes", _g(qb)])
    w.writerow(["mse_amp_limit", _g(prior.second_moment - trace.q_amp)])
    w.writerow(["mse_bayes", _g(prior.second_moment - qb)])
    w.writerow(["se_converged", trace.converged])
    w.writerow(["se_iterations", len(trace.qs) - 1])
    w.writerow(["degenerate_fixed_point", trace.degenerate])
    for k, q in enumerate(profile.stationary_points):
        w.writerow([f"stationary_point_{k}", _g(q)])
    return 0


def cmd_amp_sim(args) -> int:
    prior = prior_from_spec(args.prior)
    mses, pred = [], None
    for r in range(args.reps):
        run = bayes_amp(sample_observation(prior, args.n, seed=(args.seed, r)), prior, args.t,
                        onsager=args.onsager)
        mses.append(run.mse)
        pred = run.predicted_mse
    mses = np.array(mses)
    w = _writer(sys.stdout)
    w.writerow(["t", "mse_sim", "std_error", "mse_se", "n", "reps", "seed"])
    for t in range(args.t + 1):
        se = mses[:, t].std(ddof=1) / np.sqrt(args.reps) if args.reps > 1 else float("nan")
        w.writerow([t, _g(mses[:, t].mean()), _g(se), _g(pred[t]), args.n, args.reps, args.seed])
    return 0


def cmd_tree_list(args) -> int:
    w = _writer(sys.stdout)
    w.writerow(["code", "edges", "radius"])
    for T in enumerate_rooted_trees(args.d):
        w.writerow([T.canonical_code, T.edge_count, T.radius])
    return 0


def cmd_mp_verify(args) -> int:
    Y = sample_goe(args.n, args.seed)
    report = verify_tree_to_amp(Y, args.d, args.t, n_pairs=args.pairs, rng=args.seed)
    print(report.table())
    return 0 if report.passed else 1


def cmd_lowdeg(args) -> int:
    prior = prior_from_spec(args.prior)
    psi = PsiSpec.parse(args.psi)
    rows, summary = [], {}
    for n in args.n:
        est = estimate_c_M(prior, psi, args.d, n, args.samples, args.seed)
        if args.trees_only:
            est = est.trees_only()
        mse, _ = lowdeg_optimal_mse(est)
        summary[str(n)] = {"optimal_mse": mse, "std_error": optimal_mse_se(est)}
        codes = [g.canonical_code for g in est.graphs]
        for a, code in enumerate(codes):
            rows.append([code, "", _g(est.c[a]), _g(est.c_se[a]), n])
        for a, ca in enumerate(codes):
            for b in range(a, len(codes)):
                rows.append([ca, codes[b], _g(est.M[a, b]), _g(est.M_se[a, b]), n])
    meta = {"version": version_string(), "prior": prior.to_dict(), "psi": str(psi), "D": args.d,
            "samples": args.samples, "seed": args.seed, "trees_only": args.trees_only, "optimal_mse": summary}
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        for k, v in meta.items():
            out.write(f"# {k}: {v if isinstance(v, str) else json.dumps(v, sort_keys=True)}\n")
        w = _writer(out)
        w.writerow(["graph_code_A", "graph_code_B", "estimate", "std_error", "n"])
        w.writerows(rows)
    finally:
        if args.out:
            out.close()
    return 0


def _config(args) -> RunConfig:
    cfg = RunConfig.from_yaml(args.config) if args.config else RunConfig.from_dict({"preset": args.preset})
    over = {"seed": args.seed, "out_dir": args.out_dir}
    for key in ("n", "reps", "workers"):
        over[key] = getattr(args, key, None)
    if getattr(args, "samples", None) is not None:
        over["lowdeg_samples"] = args.samples
    if getattr(args, "n_list", None):
        over["lowdeg_n_list"] = args.n_list
    if getattr(args, "d", None) is not None:
        over["lowdeg_D"] = args.d
    return cfg.override(**over)


def cmd_figure1(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = figure1_sweep(cfg, out / "figure1.csv", out / "figure1.svg")
    print(json.dumps(result.checks(), sort_keys=True))
    print(f"wrote {out / 'figure1.csv'} and {out / 'figure1.svg'}")
    return 0


def cmd_report(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = lowdeg_vs_amp_report(cfg, out / "report.csv", out / "report.svg")
    sys.stdout.write((out / "report.csv").read_text())
    print(json.dumps(report.checks(), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amplowdeg", description=__doc__)
    p.add_argument("--version", action="version", version=version_string())
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("theory", help="scalar fixed points and MSE limits")
    s.add_argument("--prior", default=DEFAULT_PRIOR)
    s.add_argument("--grid-size", type=int, default=2000)
    s.set_defaults(func=cmd_theory)

    s = sub.add_parser("amp-sim", help="simulate Bayes AMP and compare with state evolution")
    s.add_argument("--prior", default=DEFAULT_PRIOR)
    s.add_argument("--n", type=int, default=4000)
    s.add_argument("--t", type=int, default=5)
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--onsager", choices=["se", "empirical", "none"], default="se")
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=cmd_amp_sim)

    s = sub.add_parser("tree-list", help="list rooted trees with at most D edges")
    s.add_argument("--d", type=int, required=True)
    s.set_defaults(func=cmd_tree_list)

    s = sub.add_parser("mp-verify", help="check message passing against naive tree sums")
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--t", type=int, default=4)
    s.add_argument("--pairs", type=int, default=50)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=cmd_mp_verify)

    s = sub.add_parser("lowdeg", help="Monte-Carlo Gram estimates for the graph basis")
    s.add_argument("--prior", default=DEFAULT_PRIOR)
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--n", type=int, nargs="+", required=True)
    s.add_argument("--samples", type=int, default=10**5)
    s.add_argument("--psi", default="identity")
    s.add_argument("--trees-only", action="store_true")
    s.add_argument("--out", default=None, help="CSV path (default: stdout)")
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=cmd_lowdeg)

    for name, func, hlp in (("figure1", cmd_figure1, "accuracy vs s sweep (CSV + SVG)"),
                            ("report", cmd_report, "low-degree vs AMP report (CSV + SVG)")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", default=None, help="YAML run configuration")
        s.add_argument("--preset", choices=["desk", "full"], default="desk")
        s.add_argument("--out-dir", default=None)
        s.add_argument("--seed", type=int, required=True)
        if name == "figure1":
            s.add_argument("--n", type=int, default=None)
            s.add_argument("--reps", type=int, default=None)
            s.add_argument("--workers", type=int, default=None)
        else:
            s.add_argument("--d", type=int, default=None)
            s.add_argument("--n-list", type=int, nargs="+", default=None)
            s.add_argument("--samples", type=int, default=None)
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidParameter, GuardExceeded, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
