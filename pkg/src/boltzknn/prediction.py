"""Posterior-predictive classification and the classical k-NN baseline.

Class labels in all public outputs are 1-based (1..G), matching dataset
ingestion; chain and context internals are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .neighbors import build_graph
from .posterior import ChainTrace, ModelContext

__all__ = [
    "PredictiveSummary",
    "MapGrid",
    "new_point_counts",
    "mc_predictive",
    "predict_points",
    "classify_test_set",
    "level_set_map",
    "knn_baseline",
    "knn_test_error",
    "loo_cv_error",
]


@dataclass
class PredictiveSummary:
    probs: np.ndarray        # posterior predictive class probabilities, sum to 1
    bayes_class: int         # 1-based argmax class (0-1 loss Bayes rule)
    lo: np.ndarray           # per-class lower credible quantile of per-draw probs
    hi: np.ndarray           # per-class upper credible quantile
    uncertain: bool


@dataclass
class MapGrid:
    x1: np.ndarray           # cell centres along the first selected covariate
    x2: np.ndarray
    probs: np.ndarray        # (len(x1), len(x2), G)
    zone: np.ndarray         # (len(x1), len(x2)); bayes class, 0 where uncertain

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("x1,x2,prob_1,zone\n")
            for i, a in enumerate(self.x1):
                for j, b in enumerate(self.x2):
                    f.write(f"{float(a)!r},{float(b)!r},{float(self.probs[i, j, 0])!r},"
                            f"{int(self.zone[i, j])}\n")


def new_point_counts(ctx: ModelContext, X_new: np.ndarray,
                     chunk: int = 256) -> np.ndarray:
    """(m, K, G) forward-plus-reverse neighbour class counts per point and k.

    Entry [q, k-1, g] counts training points of class g+1 among the k
    nearest neighbours of query q, plus those whose own k-th neighbour is
    farther away than the query.
    """
    g = ctx.graph
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    if X_new.shape[1] != g.p:
        raise DataError(f"expected {g.p} covariates, got {X_new.shape[1]}")
    if not np.all(np.isfinite(X_new)):
        raise DataError("non-finite covariates in query points")
    K, G = g.K, ctx.G
    onehot = np.eye(G)[ctx.y]                       # (n, G)
    kth = g.sorted_dist[:, :K]                      # (n, K)
    coords = g._coords
    Q = g._transform(X_new)
    out = np.empty((len(X_new), K, G))
    for s in range(0, len(X_new), chunk):
        q = Q[s:s + chunk]
        d = np.linalg.norm(q[:, None, :] - coords[None, :, :], axis=2)
        order = np.argsort(d, axis=1, kind="stable")[:, :K]
        fwd = np.cumsum(onehot[order], axis=1)               # (c, K, G)
        beat = d[:, :, None] < kth[None, :, :]               # (c, n, K)
        rev = np.einsum("cik,ig->ckg", beat, onehot)
        out[s:s + chunk] = fwd + rev
    return out


def _per_draw_probs(counts_k: np.ndarray, beta: np.ndarray, k: np.ndarray,
                    weights) -> np.ndarray:
    """(M, G) conditional class probabilities for one point over all draws."""
    c = counts_k[k - 1]                      # (M, G)
    if weights is not None:
        c = c * weights[None, :]
    e = (beta / k)[:, None] * c
    e -= e.max(axis=1, keepdims=True)
    w = np.exp(e)
    return w / w.sum(axis=1, keepdims=True)


def _summarise(p_draws: np.ndarray, level: float) -> PredictiveSummary:
    probs = p_draws.mean(axis=0)
    alpha = (1.0 - level) / 2.0
    lo = np.quantile(p_draws, alpha, axis=0)
    hi = np.quantile(p_draws, 1.0 - alpha, axis=0)
    bayes = int(np.argmax(probs))
    G = len(probs)
    if G == 2:
        uncertain = bool(lo[0] <= 0.5 <= hi[0])
    else:
        runner = int(np.argsort(probs)[-2])
        uncertain = bool(lo[bayes] <= hi[runner])
    return PredictiveSummary(probs=probs, bayes_class=bayes + 1,
                             lo=lo, hi=hi, uncertain=uncertain)


def _chain_arrays(chain: ChainTrace):
    if len(chain) == 0:
        raise ConfigError("empty chain")
    return chain.beta, chain.k.astype(np.int64)


def predict_points(X_new: np.ndarray, chain: ChainTrace, ctx: ModelContext,
                   level: float = 0.95) -> list[PredictiveSummary]:
    """Monte Carlo posterior predictive summary for each query point.

    The chain should already be restricted to its post-burn-in draws
    (``ChainTrace.post_burnin``).
    """
    beta, k = _chain_arrays(chain)
    if k.max() > ctx.graph.K:
        raise ConfigError("chain visits k beyond the graph's K")
    counts = new_point_counts(ctx, X_new)
    return [_summarise(_per_draw_probs(counts[q], beta, k, ctx.weights), level)
            for q in range(counts.shape[0])]


def mc_predictive(x_new: np.ndarray, chain: ChainTrace, ctx: ModelContext,
                  level: float = 0.95) -> PredictiveSummary:
    """Posterior predictive summary for a single query point."""
    return predict_points(np.atleast_2d(x_new), chain, ctx, level)[0]


def classify_test_set(X_test: np.ndarray, y_test: np.ndarray,
                      chain: ChainTrace, ctx: ModelContext,
                      level: float = 0.95):
    """Bayes-rule classification of a test set; returns (error rate, summaries).

    ``y_test`` is 1-based.  Each point is predicted independently.
    """
    y_test = np.asarray(y_test)
    summaries = predict_points(X_test, chain, ctx, level)
    pred = np.array([s.bayes_class for s in summaries])
    if len(y_test) != len(pred):
        raise DataError("test labels and covariates disagree in length")
    return float((pred != y_test).mean()), summaries


def level_set_map(box, resolution, chain: ChainTrace, ctx: ModelContext,
                  cov_idx=(0, 1), fixed: np.ndarray | None = None,
                  level: float = 0.95) -> MapGrid:
    """Predictive probabilities and sure/uncertain zones on a covariate grid.

    ``box`` is ((x1_min, x1_max), (x2_min, x2_max)) over the two selected
    covariates; the others are held at ``fixed`` (required when p > 2).
    Cell centres tile the box exactly once.
    """
    (a1, b1), (a2, b2) = box
    if not (b1 > a1 and b2 > a2):
        raise ConfigError("degenerate bounding box")
    r1, r2 = (resolution, resolution) if np.isscalar(resolution) else resolution
    p = ctx.graph.p
    if p > 2 and fixed is None:
        raise ConfigError("p > 2: supply fixed values for unselected covariates")
    e1 = np.linspace(a1, b1, r1 + 1)
    e2 = np.linspace(a2, b2, r2 + 1)
    c1 = 0.5 * (e1[:-1] + e1[1:])
    c2 = 0.5 * (e2[:-1] + e2[1:])
    base = np.zeros(p) if fixed is None else np.asarray(fixed, dtype=float)
    pts = np.tile(base, (r1 * r2, 1))
    g1, g2 = np.meshgrid(c1, c2, indexing="ij")
    pts[:, cov_idx[0]] = g1.ravel()
    pts[:, cov_idx[1]] = g2.ravel()
    summaries = predict_points(pts, chain, ctx, level)
    probs = np.array([s.probs for s in summaries]).reshape(r1, r2, ctx.G)
    zone = np.array([0 if s.uncertain else s.bayes_class
                     for s in summaries]).reshape(r1, r2)
    return MapGrid(x1=c1, x2=c2, probs=probs, zone=zone)


def _vote(sorted_labels: np.ndarray, k: int, G: int) -> int:
    """Majority vote with the shrink-k tie rule; returns a 0-based class."""
    while True:
        counts = np.bincount(sorted_labels[:k], minlength=G)
        winners = np.flatnonzero(counts == counts.max())
        if len(winners) == 1 or k == 1:
            return int(winners[0])
        k -= 1


def knn_baseline(X_train: np.ndarray, y_train: np.ndarray, x_new: np.ndarray,
                 k: int, metric: str = "euclidean") -> int:
    """Classical k-NN vote for one point (labels 1-based); ties are
    resolved by decreasing k."""
    pred = knn_classify(X_train, y_train, np.atleast_2d(x_new), k, metric)
    return int(pred[0])


def knn_classify(X_train, y_train, X_test, k: int,
                 metric: str = "euclidean") -> np.ndarray:
    X_train = np.asarray(X_train, dtype=float)
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    y0 = np.asarray(y_train, dtype=np.int64) - 1
    G = int(y0.max()) + 1
    n = len(X_train)
    if not 1 <= k <= n:
        raise ConfigError(f"k={k} out of range [1, {n}]")
    if metric == "mahalanobis":
        g = build_graph(X_train, K=1, metric="mahalanobis")
        Xtr, Xte = g._coords, g._transform(X_test)
    else:
        Xtr, Xte = X_train, X_test
    d = np.linalg.norm(Xte[:, None, :] - Xtr[None, :, :], axis=2)
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    return np.array([_vote(y0[row], k, G) for row in order]) + 1


def knn_test_error(X_train, y_train, X_test, y_test, k: int,
                   metric: str = "euclidean") -> float:
    pred = knn_classify(X_train, y_train, X_test, k, metric)
    return float((pred != np.asarray(y_test)).mean())


def loo_cv_error(X_train, y_train, k_range, metric: str = "euclidean"):
    """Leave-one-out error per k; returns (errors dict, argmin k list)."""
    X_train = np.asarray(X_train, dtype=float)
    y0 = np.asarray(y_train, dtype=np.int64) - 1
    G = int(y0.max()) + 1
    n = len(X_train)
    k_range = [int(k) for k in k_range]
    if any(not 1 <= k <= n - 1 for k in k_range):
        raise ConfigError(f"k range must lie in [1, {n - 1}]")
    g = build_graph(X_train, K=max(k_range), metric=metric)
    sorted_labels = y0[g.order]  # excludes the held-out point itself
    errors = {}
    for k in k_range:
        pred = np.array([_vote(sorted_labels[i], k, G) for i in range(n)])
        errors[k] = float((pred != y0).mean())
    emin = min(errors.values())
    argmin = [k for k, v in errors.items() if v == emin]
    return errors, argmin
