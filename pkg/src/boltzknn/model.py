"""The symmetrised Boltzmann neighbour model.

All label vectors are 0-based numpy integer arrays with values in
{0, ..., G-1}.  The density of a label configuration y is proportional to

    exp( beta * S(y; k) ),   S(y; k) = (1/k) sum_i a_{y_i} sum_{l in N^k_i} 1[y_l = y_i],

where N^k_i is the forward neighbourhood of point i and a_g are optional
per-class weights (all 1 by default).  The full conditional of a single
label counts mutual neighbours twice, via the reverse neighbour sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, DataError
from .neighbors import NeighborGraph

__all__ = [
    "Prior",
    "potential",
    "potential_all_k",
    "log_joint_unnorm",
    "neighbor_class_counts",
    "full_conditional",
    "ha_conditional",
    "pseudo_log_likelihood",
    "exact_log_z",
    "enumerate_configs",
    "exact_distribution",
    "predictive_conditional",
]


@dataclass
class Prior:
    """Uniform prior on {1..K} x [0, beta_max] plus optional class weights."""

    beta_max: float
    K: int
    class_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.beta_max <= 0:
            raise ConfigError("beta_max must be positive")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.class_weights is not None:
            self.class_weights = np.asarray(self.class_weights, dtype=float)
            if np.any(self.class_weights <= 0):
                raise ConfigError("class weights must be positive")

    def weights(self, G: int) -> np.ndarray:
        if self.class_weights is None:
            return np.ones(G)
        if len(self.class_weights) != G:
            raise ConfigError("class_weights length must equal G")
        return self.class_weights


def _check_labels(y: np.ndarray, g: NeighborGraph) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (g.n,):
        raise DataError(f"labels have length {y.shape}, graph has n={g.n}")
    return y


def potential(y: np.ndarray, g: NeighborGraph, k: int,
              weights: np.ndarray | None = None) -> float:
    """S(y; k): per-neighbour agreement over forward sets, scaled by 1/k."""
    y = _check_labels(y, g)
    fwd = g.order[:, :k]
    agree = (y[fwd] == y[:, None]).sum(axis=1).astype(float)
    if weights is not None:
        agree *= np.asarray(weights)[y]
    return float(agree.sum()) / k


def potential_all_k(y: np.ndarray, g: NeighborGraph,
                    weights: np.ndarray | None = None) -> np.ndarray:
    """S(y; k) for every k = 1..K at once (index k-1)."""
    y = _check_labels(y, g)
    agree = (y[g.order[:, : g.K]] == y[:, None]).astype(float)
    if weights is not None:
        agree *= np.asarray(weights)[y][:, None]
    totals = agree.sum(axis=0).cumsum()
    return totals / np.arange(1, g.K + 1)


def log_joint_unnorm(y: np.ndarray, g: NeighborGraph, beta: float, k: int,
                     weights: np.ndarray | None = None) -> float:
    """log of the unnormalised joint density, beta * S(y; k)."""
    if beta < 0:
        raise ConfigError("beta must be >= 0")
    return beta * potential(y, g, k, weights)


def neighbor_class_counts(y: np.ndarray, g: NeighborGraph, k: int, G: int) -> np.ndarray:
    """(n, G) matrix of forward-plus-reverse neighbour counts per class.

    Entry [i, g'] is the number of neighbours of i (mutual ones counted
    twice) with label g'; this is the count entering the full conditional.
    """
    y = _check_labels(y, g)
    A = (g.rank < k)
    M = A.astype(np.int16) + A.T.astype(np.int16)
    onehot = np.eye(G, dtype=np.int16)[y]
    return (M @ onehot).astype(float)


def _softmax(e: np.ndarray) -> np.ndarray:
    e = e - e.max()
    w = np.exp(e)
    return w / w.sum()


def full_conditional(i: int, y: np.ndarray, g: NeighborGraph, beta: float,
                     k: int, G: int, weights: np.ndarray | None = None) -> np.ndarray:
    """True full conditional of y_i under the symmetrised joint model."""
    y = _check_labels(y, g)
    fwd = g.order[i, :k]
    rev = np.flatnonzero(g.rank[:, i] < k)
    counts = (np.bincount(y[fwd], minlength=G)
              + np.bincount(y[rev], minlength=G)).astype(float)
    if weights is not None:
        counts *= np.asarray(weights)
    return _softmax(beta / k * counts)


def ha_conditional(i: int, y: np.ndarray, g: NeighborGraph, beta: float,
                   k: int, G: int, weights: np.ndarray | None = None) -> np.ndarray:
    """Forward-only conditional (the incompatible specification).

    Provided for comparison only; it is not the conditional of any joint
    distribution when the neighbour system is asymmetric.
    """
    y = _check_labels(y, g)
    counts = np.bincount(y[g.order[i, :k]], minlength=G).astype(float)
    if weights is not None:
        counts *= np.asarray(weights)
    return _softmax(beta / k * counts)


def pseudo_log_likelihood(y: np.ndarray, g: NeighborGraph, beta: float, k: int,
                          G: int, weights: np.ndarray | None = None,
                          counts: np.ndarray | None = None) -> float:
    """Sum over sites of the log full conditional of the observed label.

    ``counts`` may carry a precomputed ``neighbor_class_counts`` matrix to
    avoid rebuilding it when only (beta, k) changes.
    """
    y = _check_labels(y, g)
    if counts is None:
        counts = neighbor_class_counts(y, g, k, G)
    if weights is not None:
        counts = counts * np.asarray(weights)[None, :]
    e = beta / k * counts
    return float((e[np.arange(g.n), y] - logsumexp(e, axis=1)).sum())


def enumerate_configs(n: int, G: int) -> np.ndarray:
    """All G^n label configurations as an (G^n, n) int8 array."""
    if G ** n > 2 ** 21:
        raise ConfigError(f"enumeration over {G}^{n} configurations refused")
    grids = np.meshgrid(*([np.arange(G, dtype=np.int8)] * n), indexing="ij")
    return np.stack([a.ravel() for a in grids], axis=1)


def _potentials_of_configs(configs: np.ndarray, g: NeighborGraph, k: int,
                           weights: np.ndarray | None) -> np.ndarray:
    fwd = g.order[:, :k]  # (n, k)
    Y = configs  # (m, n)
    agree = (Y[:, fwd] == Y[:, :, None]).astype(float)  # (m, n, k)
    if weights is not None:
        agree *= np.asarray(weights)[Y][:, :, None]
    return agree.sum(axis=(1, 2)) / k


def exact_log_z(g: NeighborGraph, beta: float, k: int, G: int,
                weights: np.ndarray | None = None) -> float:
    """Exact log normalising constant by exhaustive enumeration (test oracle)."""
    if g.n > 20:
        raise ConfigError("exact_log_z is limited to n <= 20")
    S = _potentials_of_configs(enumerate_configs(g.n, G), g, k, weights)
    return float(logsumexp(beta * S))


def exact_distribution(g: NeighborGraph, beta: float, k: int, G: int,
                       weights: np.ndarray | None = None):
    """All configurations and their exact probabilities (test oracle)."""
    configs = enumerate_configs(g.n, G)
    S = _potentials_of_configs(configs, g, k, weights)
    logp = beta * S - logsumexp(beta * S)
    return configs, np.exp(logp)


def predictive_conditional(x_new: np.ndarray, y: np.ndarray, g: NeighborGraph,
                           beta: float, k: int, G: int,
                           weights: np.ndarray | None = None) -> np.ndarray:
    """Class distribution of a new point given training labels and (beta, k)."""
    y = _check_labels(y, g)
    fwd, rev = g.query_new_point(x_new, k)
    counts = (np.bincount(y[fwd], minlength=G)
              + np.bincount(y[rev], minlength=G)).astype(float)
    if weights is not None:
        counts *= np.asarray(weights)
    return _softmax(beta / k * counts)
