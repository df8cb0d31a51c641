"""Command-line front end: fit / zgrid / predict / compare / baseline.

All outputs are plain CSV plus JSON sidecars; nothing is plotted here.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_io
from .errors import BoltzknnError, ConfigError, DataError, NumericalError
from .model import Prior
from .normalizer import ZGrid, build_zgrid, default_beta_knots, default_k_knots
from .posterior import (ChainTrace, ModelContext, PluginEstimate,
                        ProposalConfig, max_pseudo_likelihood, run_chain)
from .prediction import classify_test_set, knn_test_error, level_set_map, loo_cv_error
from .neighbors import build_graph

METHODS = ("pseudo", "path", "moller-gibbs", "moller-perfect")
DEFAULT_BUDGETS = {"pseudo": (50_000, 40_000), "path": (50_000, 40_000),
                   "moller-gibbs": (20_000, 10_000),
                   "moller-perfect": (20_000, 10_000)}


def _load_dataset(path: str, label_column: str, coalesce: str | None,
                  standardize: bool, transform=None):
    if path is None:
        raise ConfigError("a dataset path is required")
    p = Path(path)
    if p.suffix == ".csv":
        ds = data_io.load_csv(p, label_column=label_column)
    else:
        ds = data_io.load_ripley(p)
    if coalesce:
        if coalesce == "glass4":
            mapping = data_io.GLASS_COALESCE_MAP
        else:
            mapping = json.loads(coalesce)
        ds = data_io.coalesce_classes(ds, mapping)
    if transform is not None:
        from dataclasses import replace
        ds = replace(ds, X=transform.apply(ds.X))
    elif standardize:
        ds, transform = data_io.standardize(ds)
    return ds, transform


def _build_context(ds, args):
    k_max = args.k_max if args.k_max else int(ds.class_sizes().min())
    k_max = min(k_max, ds.n - 1)
    graph = build_graph(ds.X, K=k_max, metric=args.metric)
    prior = Prior(beta_max=args.beta_max, K=k_max)
    return ModelContext(graph, ds.y - 1, ds.G, prior)


def _parse_knots(text: str | None, default):
    if text is None:
        return default
    if "," in text:
        return np.array([float(v) for v in text.split(",")])
    return int(text)


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, default=str)


def _echo_config(out_dir: Path, name: str, args) -> None:
    _write_json(out_dir / f"{name}_config.json",
                {k: v for k, v in sorted(vars(args).items()) if k != "func"})


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ensure_zgrid(ctx, args, out: Path) -> ZGrid:
    if args.zgrid and Path(args.zgrid).exists():
        zg = ZGrid.from_csv(args.zgrid)
        if zg.meta and (zg.meta.get("n") != ctx.n or zg.meta.get("G") != ctx.G):
            raise DataError("Z grid was built for a different dataset")
        return zg
    bknots = _parse_knots(args.grid_beta_knots, None)
    if bknots is None:
        bknots = default_beta_knots(args.beta_max)
    elif np.isscalar(bknots):
        bknots = default_beta_knots(args.beta_max, int(bknots))
    kknots = _parse_knots(args.grid_k_knots, None)
    if kknots is None:
        kknots = default_k_knots(ctx.prior.K)
    elif np.isscalar(kknots):
        kknots = default_k_knots(ctx.prior.K, int(kknots))
    else:
        kknots = kknots.astype(int)
    zg = build_zgrid(ctx.graph, ctx.G, beta_knots=bknots, k_knots=kknots,
                     sweeps=args.grid_sweeps, burnin=args.grid_burnin,
                     seed=args.seed, beta_max=args.beta_max,
                     weights=ctx.weights,
                     smooth_threshold=args.grid_smooth_threshold)
    zg.to_csv(out / "zgrid.csv")
    return zg


def _fit_report(trace: ChainTrace, burnin: int) -> dict:
    post = trace.post_burnin(burnin)
    k_vals, k_counts = np.unique(post.k, return_counts=True)
    return {
        "kind": trace.kind,
        "acceptance_rate": trace.acceptance_rate,
        "cftp_timeouts": trace.cftp_timeouts,
        "posterior_mean_beta": float(post.beta.mean()),
        "posterior_median_beta": float(np.median(post.beta)),
        "posterior_mean_k": float(post.k.mean()),
        "k_barplot": {int(k): int(c) for k, c in zip(k_vals, k_counts)},
        "config": trace.config,
    }


def cmd_fit(args) -> int:
    out = _out_dir(args)
    _echo_config(out, "fit", args)
    ds, _ = _load_dataset(args.train, args.label_column, args.coalesce,
                          args.standardize)
    ctx = _build_context(ds, args)
    iters, burnin = DEFAULT_BUDGETS[args.method]
    iters = args.iters or iters
    burnin = args.burnin if args.burnin is not None else min(burnin, iters - 1)
    if iters <= burnin:
        raise ConfigError(f"iters ({iters}) must exceed burnin ({burnin})")
    if args.method == "moller-perfect" and not args.allow_perfect:
        raise ConfigError("moller-perfect can run for a very long time; "
                          "pass --allow-perfect to acknowledge")
    cfg = ProposalConfig(tau2=args.tau2, r=args.r, beta_max=args.beta_max,
                         K=ctx.prior.K)
    zgrid = _ensure_zgrid(ctx, args, out) if args.method == "path" else None
    plugin = None
    if args.method.startswith("moller"):
        if args.plugin_beta is not None and args.plugin_k is not None:
            plugin = PluginEstimate(args.plugin_beta, args.plugin_k)
        else:
            plugin = max_pseudo_likelihood(ctx)
    trace = run_chain(args.method, ctx, iters, burnin, cfg, seed=args.seed,
                      zgrid=zgrid, plugin=plugin,
                      inner_sweeps=args.inner_sweeps,
                      plugin_update_at=args.plugin_update_at)
    trace.config["burnin"] = burnin
    trace.to_csv(out / "trace.csv")
    report = _fit_report(trace, burnin)
    if plugin is not None:
        report["plugin"] = {"beta_hat": plugin.beta_hat, "k_hat": plugin.k_hat}
    _write_json(out / "fit_report.json", report)
    if trace.cftp_timeouts:
        print(f"warning: {trace.cftp_timeouts} inner CFTP timeouts "
              "(proposals rejected)", file=sys.stderr)
    print(f"wrote {out / 'trace.csv'} "
          f"(acceptance rate {trace.acceptance_rate:.3f})")
    return 0


def cmd_zgrid(args) -> int:
    out = _out_dir(args)
    _echo_config(out, "zgrid", args)
    target = out / "zgrid.csv"
    if target.exists() and not args.force:
        raise ConfigError(f"{target} exists; pass --force to overwrite")
    ds, _ = _load_dataset(args.train, args.label_column, args.coalesce,
                          args.standardize)
    ctx = _build_context(ds, args)
    args.zgrid = None
    zg = _ensure_zgrid(ctx, args, out)
    if len(zg.beta_knots) < 3:
        print("warning: degenerate beta grid with fewer than 3 knots",
              file=sys.stderr)
    print(f"wrote {target} ({len(zg.beta_knots)}x{len(zg.k_knots)} knots)")
    return 0


def _write_predictions(path: Path, summaries, G: int) -> None:
    with open(path, "w") as f:
        probs_hdr = ",".join(f"prob_{g}" for g in range(1, G + 1))
        f.write(f"point_id,{probs_hdr},bayes_class,lo,hi,uncertain\n")
        for i, s in enumerate(summaries):
            probs = ",".join(repr(float(v)) for v in s.probs)
            cls = 0 if G == 2 else s.bayes_class - 1
            f.write(f"{i},{probs},{s.bayes_class},{float(s.lo[cls])!r},"
                    f"{float(s.hi[cls])!r},{int(s.uncertain)}\n")


def cmd_predict(args) -> int:
    out = _out_dir(args)
    _echo_config(out, "predict", args)
    trace_path = Path(args.trace) if args.trace else out / "trace.csv"
    if not trace_path.exists():
        raise DataError(f"no trace at {trace_path}")
    trace = ChainTrace.from_csv(trace_path)
    ds, transform = _load_dataset(args.train, args.label_column, args.coalesce,
                                  args.standardize)
    ctx = _build_context(ds, args)
    cfg_n, cfg_g = trace.config.get("n"), trace.config.get("G")
    if cfg_n not in (None, ctx.n) or cfg_g not in (None, ctx.G):
        raise DataError(f"trace was fit on n={cfg_n}, G={cfg_g}; "
                        f"training data has n={ctx.n}, G={ctx.G}")
    burnin = args.burnin if args.burnin is not None \
        else int(trace.config.get("burnin") or 0)
    post = trace.post_burnin(burnin)
    test, _ = _load_dataset(args.test, args.label_column, args.coalesce,
                            False, transform=transform)
    if test.p != ds.p:
        raise DataError(f"test data has p={test.p}, training p={ds.p}")
    error, summaries = classify_test_set(test.X, test.y, post, ctx,
                                         level=args.credible_level)
    _write_predictions(out / "predictions.csv", summaries, ctx.G)
    report = {"n_test": test.n, "error_rate": error,
              "n_uncertain": int(sum(s.uncertain for s in summaries))}
    if args.map:
        if ds.p != 2 and args.map_covariates is None:
            raise ConfigError("p != 2: pass --map-covariates i,j to select "
                              "the two axes of the level-set map")
        cov_idx = (0, 1) if args.map_covariates is None else \
            tuple(int(v) for v in args.map_covariates.split(","))
        cols = ds.X[:, list(cov_idx)]
        lo, hi = cols.min(axis=0), cols.max(axis=0)
        pad = 0.05 * (hi - lo)
        box = ((lo[0] - pad[0], hi[0] + pad[0]), (lo[1] - pad[1], hi[1] + pad[1]))
        fixed = ds.X.mean(axis=0) if ds.p > 2 else None
        grid = level_set_map(box, args.map_resolution, post, ctx,
                             cov_idx=cov_idx, fixed=fixed,
                             level=args.credible_level)
        grid.to_csv(out / "map.csv")
        report["map"] = str(out / "map.csv")
    _write_json(out / "predict_report.json", report)
    print(f"error rate {error:.4f} on {test.n} points; "
          f"wrote {out / 'predictions.csv'}")
    return 0


def cmd_compare(args) -> int:
    out = _out_dir(args)
    _echo_config(out, "compare", args)
    paths = [Path(p) for p in args.traces.split(",")]
    if len(paths) < 2:
        raise ConfigError("compare needs at least two traces")
    traces = [ChainTrace.from_csv(p) for p in paths]
    base = traces[0].config
    for t in traces[1:]:
        if (t.config.get("n"), t.config.get("G")) != (base.get("n"), base.get("G")):
            raise DataError("traces come from different datasets")
    posts = [t.post_burnin(int(t.config.get("burnin") or 0)) for t in traces]

    edges = np.linspace(0, max(t.config.get("beta_max", 4.0) for t in traces), 41)
    with open(out / "beta_histograms.csv", "w") as f:
        f.write("method,bin_lo,bin_hi,count\n")
        for t in posts:
            counts, _ = np.histogram(t.beta, bins=edges)
            for j, c in enumerate(counts):
                f.write(f"{t.kind},{float(edges[j])!r},{float(edges[j + 1])!r},{int(c)}\n")
    with open(out / "k_barplots.csv", "w") as f:
        f.write("method,k,count\n")
        for t in posts:
            ks, counts = np.unique(t.k, return_counts=True)
            for k, c in zip(ks, counts):
                f.write(f"{t.kind},{int(k)},{int(c)}\n")

    summary = {t.kind: {"mean_beta": float(t.beta.mean()),
                        "mean_k": float(t.k.mean()),
                        "draws": len(t)} for t in posts}

    if args.train and args.test:
        ds, transform = _load_dataset(args.train, args.label_column,
                                      args.coalesce, args.standardize)
        ctx = _build_context(ds, args)
        test, _ = _load_dataset(args.test, args.label_column, args.coalesce,
                                False, transform=transform)
        all_probs = []
        for t in posts:
            _, summaries = classify_test_set(test.X, test.y, t, ctx)
            all_probs.append(np.array([s.probs for s in summaries]))
        with open(out / "probability_scatter.csv", "w") as f:
            f.write("point_id," + ",".join(f"prob1_{t.kind}" for t in posts) + "\n")
            for i in range(test.n):
                f.write(f"{i}," + ",".join(repr(float(p[i, 0]))
                                           for p in all_probs) + "\n")
        ref = all_probs[0]
        for j, t in enumerate(posts[1:], start=1):
            d = np.abs(all_probs[j] - ref)
            cls_ref = ref.argmax(axis=1)
            cls_j = all_probs[j].argmax(axis=1)
            summary[t.kind]["prob_mean_abs_diff_vs_first"] = float(d.mean())
            summary[t.kind]["prob_max_abs_diff_vs_first"] = float(d.max())
            summary[t.kind]["n_classification_changes_vs_first"] = \
                int((cls_ref != cls_j).sum())
    _write_json(out / "compare_report.json", summary)
    print(f"compared {len(posts)} traces; wrote {out / 'compare_report.json'}")
    return 0


def cmd_baseline(args) -> int:
    out = _out_dir(args)
    _echo_config(out, "baseline", args)
    ds, transform = _load_dataset(args.train, args.label_column, args.coalesce,
                                  args.standardize)
    test, _ = _load_dataset(args.test, args.label_column, args.coalesce,
                            False, transform=transform)
    ks = [int(v) for v in args.k_values.split(",")] if args.k_values else \
        [1, 3, 15, 31]
    if any(not 1 <= k <= ds.n for k in ks):
        raise ConfigError(f"k values must lie in [1, {ds.n}]")
    with open(out / "baseline.csv", "w") as f:
        f.write("k,test_error\n")
        for k in ks:
            err = knn_test_error(ds.X, ds.y, test.X, test.y, k, args.metric)
            f.write(f"{k},{float(err)!r}\n")
    loo_max = args.k_max or min(ds.n - 1, 150)
    errors, argmin = loo_cv_error(ds.X, ds.y, range(1, loo_max + 1), args.metric)
    with open(out / "loo_curve.csv", "w") as f:
        f.write("k,loo_error\n")
        for k, e in errors.items():
            f.write(f"{k},{float(e)!r}\n")
    _write_json(out / "baseline_report.json",
                {"loo_argmin": argmin, "loo_min_error": min(errors.values())})
    print(f"wrote {out / 'baseline.csv'}; LOO argmin {argmin}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", help="training data file (.csv or Ripley .dat)")
    p.add_argument("--test", help="test data file")
    p.add_argument("--label-column", default="label")
    p.add_argument("--coalesce", help="JSON class mapping, or 'glass4'")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--metric", choices=("euclidean", "mahalanobis"),
                   default="euclidean")
    p.add_argument("--beta-max", type=float, default=4.0)
    p.add_argument("--k-max", type=int, help="default: minimal class size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--burnin", type=int)


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid-beta-knots",
                   help="knot count or comma-separated values")
    p.add_argument("--grid-k-knots",
                   help="knot count or comma-separated values")
    p.add_argument("--grid-sweeps", type=int, default=10_000)
    p.add_argument("--grid-burnin", type=int, default=500)
    p.add_argument("--grid-smooth-threshold", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="boltzknn",
        description="Bayesian k-nearest-neighbour classification")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="run an MCMC chain over (beta, k)")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--method", choices=METHODS, default="moller-gibbs")
    p.add_argument("--iters", type=int)
    p.add_argument("--tau2", type=float, default=0.05)
    p.add_argument("--r", type=int, default=3)
    p.add_argument("--inner-sweeps", type=int, default=500)
    p.add_argument("--plugin-update-at", type=int, default=10_000)
    p.add_argument("--plugin-beta", type=float)
    p.add_argument("--plugin-k", type=int)
    p.add_argument("--zgrid", help="existing Z-grid CSV for the path method")
    p.add_argument("--allow-perfect", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("zgrid", help="tabulate log Z(beta, k)")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_zgrid)

    p = sub.add_parser("predict", help="posterior-predictive classification")
    _add_common(p)
    p.add_argument("--trace", help="trace CSV (default: OUT_DIR/trace.csv)")
    p.add_argument("--credible-level", type=float, default=0.95)
    p.add_argument("--map", action="store_true",
                   help="also write a level-set map CSV")
    p.add_argument("--map-resolution", type=int, default=100)
    p.add_argument("--map-covariates", help="two covariate indices, e.g. 0,1")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="compare posterior approximations")
    _add_common(p)
    p.add_argument("--traces", required=True,
                   help="comma-separated trace CSV paths (>= 2)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("baseline", help="classical k-NN errors and LOO curve")
    _add_common(p)
    p.add_argument("--k-values", help="comma-separated k values to evaluate")
    p.set_defaults(func=cmd_baseline)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except BoltzknnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
