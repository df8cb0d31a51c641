"""Asymmetric k-nearest-neighbour structure over training covariates.

The graph stores, for every training point, all other points sorted by
distance (ties broken by ascending index), so forward neighbour sets for
any ``k <= K`` are prefixes of a single ordering and reverse sets are
their exact transpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

__all__ = ["NeighborGraph", "build_graph"]


def _mahalanobis_transform(X: np.ndarray) -> np.ndarray:
    """Whitening matrix W such that ||(x - y) @ W|| is the Mahalanobis distance."""
    p = X.shape[1]
    cov = np.cov(X, rowvar=False).reshape(p, p)
    jitter = 1e-9 * np.trace(cov) / p
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        try:
            L = np.linalg.cholesky(cov + jitter * np.eye(p))
        except np.linalg.LinAlgError as exc:
            raise DataError("singular covariance for mahalanobis metric") from exc
    return np.linalg.inv(L).T


@dataclass
class NeighborGraph:
    """Immutable forward/reverse k-NN structure (0-based indices)."""

    X: np.ndarray            # original covariates, (n, p)
    K: int
    metric: str
    order: np.ndarray        # (n, n-1) neighbours of each point by increasing distance
    sorted_dist: np.ndarray  # (n, n-1) distances aligned with ``order``
    rank: np.ndarray         # (n, n); rank[i, j] = position of j in order[i], rank[i, i] = n
    _coords: np.ndarray = field(repr=False, default=None)  # working (whitened) coordinates
    _adj_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def _check_ik(self, i: int, k: int) -> None:
        if not 0 <= i < self.n:
            raise ConfigError(f"point index {i} out of range [0, {self.n})")
        if not 1 <= k <= self.K:
            raise ConfigError(f"k={k} out of range [1, {self.K}]")

    def forward_neighbors(self, i: int, k: int) -> np.ndarray:
        """Indices of the k nearest neighbours of point ``i``."""
        self._check_ik(i, k)
        return self.order[i, :k].copy()

    def reverse_neighbors(self, i: int, k: int) -> np.ndarray:
        """Points whose forward k-neighbourhood contains ``i``."""
        self._check_ik(i, k)
        return np.flatnonzero(self.rank[:, i] < k)

    def kth_distances(self, k: int) -> np.ndarray:
        """Distance from each point to its k-th nearest neighbour."""
        if not 1 <= k <= self.K:
            raise ConfigError(f"k={k} out of range [1, {self.K}]")
        return self.sorted_dist[:, k - 1]

    def distances_to(self, x_new: np.ndarray) -> np.ndarray:
        """Distances from a new covariate vector to every training point."""
        x_new = np.asarray(x_new, dtype=float).ravel()
        if x_new.shape[0] != self.p:
            raise DataError(f"expected {self.p} covariates, got {x_new.shape[0]}")
        if not np.all(np.isfinite(x_new)):
            raise DataError("non-finite covariates in query point")
        return np.linalg.norm(self._coords - self._transform(x_new[None, :]), axis=1)

    def _transform(self, Xq: np.ndarray) -> np.ndarray:
        if self.metric == "euclidean":
            return Xq
        return Xq @ self._W

    def query_new_point(self, x_new: np.ndarray, k: int):
        """Forward and reverse neighbour sets of an out-of-sample point.

        Forward: the k nearest training points (distance ties by ascending
        index).  Reverse: training points whose k-th neighbour is farther
        away than the new point.
        """
        if not 1 <= k <= self.K:
            raise ConfigError(f"k={k} out of range [1, {self.K}]")
        d = self.distances_to(x_new)
        forward = np.argsort(d, kind="stable")[:k]
        reverse = np.flatnonzero(d < self.kth_distances(k))
        return forward, reverse

    def adjacency(self, k: int):
        """Symmetrised adjacency M = A + A^T for neighbourhood size ``k``.

        Returned as CSR-style arrays ``(ptr, idx, wt)`` with int weights in
        {1, 2}; mutual neighbours carry weight 2.
        """
        if not 1 <= k <= self.K:
            raise ConfigError(f"k={k} out of range [1, {self.K}]")
        cached = self._adj_cache.get(k)
        if cached is not None:
            return cached
        A = (self.rank < k).astype(np.int8)
        M = A + A.T
        ptr = np.zeros(self.n + 1, dtype=np.int64)
        counts = (M > 0).sum(axis=1)
        np.cumsum(counts, out=ptr[1:])
        idx = np.empty(ptr[-1], dtype=np.int64)
        wt = np.empty(ptr[-1], dtype=np.int8)
        for i in range(self.n):
            nz = np.flatnonzero(M[i])
            idx[ptr[i]:ptr[i + 1]] = nz
            wt[ptr[i]:ptr[i + 1]] = M[i, nz]
        self._adj_cache[k] = (ptr, idx, wt)
        return self._adj_cache[k]

    # kept for the mahalanobis query path
    @property
    def _W(self) -> np.ndarray:
        return self.__dict__["_W_mat"]


def build_graph(X: np.ndarray, K: int, metric: str = "euclidean") -> NeighborGraph:
    """Build the full O(n^2) neighbour ordering for all k <= K.

    Distance ties are broken by ascending training index (stable sort on
    the index-ordered distance rows).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("covariate matrix must be 2-D")
    n, p = X.shape
    if n < 2 or p < 1:
        raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite covariates")
    if not 1 <= K <= n - 1:
        raise ConfigError(f"K={K} out of range [1, {n - 1}]")
    if metric not in ("euclidean", "mahalanobis"):
        raise ConfigError(f"unknown metric {metric!r}")

    W = None
    coords = X
    if metric == "mahalanobis":
        W = _mahalanobis_transform(X)
        coords = X @ W

    diff = coords[:, None, :] - coords[None, :, :]
    D = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(D, np.inf)

    order = np.argsort(D, axis=1, kind="stable")[:, : n - 1]
    rows = np.arange(n)[:, None]
    sorted_dist = D[rows, order]

    rank = np.full((n, n), n, dtype=np.int64)
    rank[rows, order] = np.arange(n - 1)[None, :]

    g = NeighborGraph(X=X, K=K, metric=metric, order=order,
                      sorted_dist=sorted_dist, rank=rank, _coords=coords)
    if W is not None:
        g.__dict__["_W_mat"] = W
    return g
