"""Path-sampling estimation of the log normalising constant.

log Z(beta, k) is anchored at n*log(G) for beta = 0 and extended by
integrating Monte Carlo estimates of the expected potential E_beta[S]
over beta, tabulated on a (beta, k) lattice with bilinear interpolation
between knots.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import make_interp_spline

from .errors import ConfigError, NumericalError
from .neighbors import NeighborGraph
from .samplers import gibbs_sample_record

__all__ = [
    "ZGrid",
    "estimate_mean_potential",
    "build_zgrid",
    "interp_log_z",
    "default_beta_knots",
    "default_k_knots",
]

PAPER_K_KNOTS = (1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 125)


@dataclass
class ZGrid:
    beta_knots: np.ndarray   # ascending, starting at 0
    k_knots: np.ndarray      # ascending integers
    logz: np.ndarray         # (n_beta, n_k)
    mean_potential: np.ndarray | None = None  # E[S] estimates, same shape
    meta: dict = field(default_factory=dict)

    def interp(self, beta: float, k: float) -> float:
        return interp_log_z(self, beta, k)

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w") as f:
            f.write("beta,k,logz\n")
            for bi, b in enumerate(self.beta_knots):
                for kj, k in enumerate(self.k_knots):
                    f.write(f"{float(b)!r},{int(k)},{float(self.logz[bi, kj])!r}\n")
        with open(path.with_suffix(path.suffix + ".meta.json"), "w") as f:
            json.dump(self.meta, f, indent=2)

    @classmethod
    def from_csv(cls, path) -> "ZGrid":
        path = Path(path)
        rows = np.genfromtxt(path, delimiter=",", names=True)
        betas = np.unique(rows["beta"])
        ks = np.unique(rows["k"]).astype(int)
        logz = np.full((len(betas), len(ks)), np.nan)
        bi = np.searchsorted(betas, rows["beta"])
        kj = np.searchsorted(ks, rows["k"].astype(int))
        logz[bi, kj] = rows["logz"]
        if np.any(np.isnan(logz)):
            raise ConfigError(f"grid file {path} does not cover a full lattice")
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        meta = {}
        if meta_path.exists():
            with open(meta_path) as f:
                meta = json.load(f)
        return cls(beta_knots=betas, k_knots=ks, logz=logz, meta=meta)


def default_beta_knots(beta_max: float, n_knots: int = 50) -> np.ndarray:
    return np.linspace(0.0, beta_max, n_knots)


def default_k_knots(K: int, n_knots: int = 12) -> np.ndarray:
    """The k-lattice: the reference 12-knot list when K allows, otherwise
    evenly respaced integers over {1..K}."""
    if K >= PAPER_K_KNOTS[-1]:
        return np.array([k for k in PAPER_K_KNOTS if k <= K], dtype=int)
    return np.unique(np.round(np.linspace(1, K, min(n_knots, K))).astype(int))


def estimate_mean_potential(g: NeighborGraph, beta: float, k: int, G: int,
                            sweeps: int, burnin: int, seed: int | None = None,
                            weights=None, init=None,
                            rng: np.random.Generator | None = None):
    """Monte Carlo estimate of E_beta[S(y; k)] from a Gibbs chain.

    At beta = 0 the value n/G is returned exactly without simulation.
    Returns (estimate, final_state) so grid builds can warm-start.
    """
    if not sweeps > burnin >= 0:
        raise ConfigError("need sweeps > burnin >= 0")
    if beta == 0.0:
        aw_mean = 1.0 if weights is None else float(np.mean(weights))
        return g.n / G * aw_mean, init
    state, S = gibbs_sample_record(g, beta, k, G, sweeps, seed=seed,
                                   init=init, weights=weights, rng=rng)
    return float(S[burnin:].mean()), state


def build_zgrid(g: NeighborGraph, G: int, beta_knots=None, k_knots=None,
                sweeps: int = 10_000, burnin: int = 500, seed: int = 0,
                beta_max: float = 4.0, weights=None,
                interp_kind: str = "linear",
                smooth_threshold: float | None = None) -> ZGrid:
    """Tabulate log Z(beta, k) on a lattice by thermodynamic integration.

    Per k-knot, the E[S] curve over the ascending beta-knots is estimated
    by warm-started Gibbs chains and integrated from 0 (trapezoid for
    ``interp_kind='linear'``, a quadratic spline antiderivative for
    ``'spline'``), anchored at log Z(0, k) = n log G.
    """
    if beta_knots is None:
        beta_knots = default_beta_knots(beta_max)
    if k_knots is None:
        k_knots = default_k_knots(g.K)
    beta_knots = np.asarray(beta_knots, dtype=float)
    k_knots = np.asarray(k_knots, dtype=int)
    if len(beta_knots) < 2 or beta_knots[0] != 0.0:
        raise ConfigError("beta knots must start at 0 and have length >= 2")
    if np.any(np.diff(beta_knots) <= 0) or np.any(np.diff(k_knots) <= 0):
        raise ConfigError("knots must be strictly increasing")
    if k_knots[0] < 1 or k_knots[-1] > g.K:
        raise ConfigError(f"k knots must lie in [1, {g.K}]")
    if interp_kind not in ("linear", "spline"):
        raise ConfigError(f"unknown interpolation kind {interp_kind!r}")

    n_b, n_k = len(beta_knots), len(k_knots)
    es = np.empty((n_b, n_k))
    logz = np.empty((n_b, n_k))
    for kj, k in enumerate(k_knots):
        rng = np.random.default_rng([seed, int(k)])
        state = None
        for bi, beta in enumerate(beta_knots):
            es[bi, kj], state = estimate_mean_potential(
                g, float(beta), int(k), G, sweeps, burnin,
                weights=weights, init=state, rng=rng)
        if smooth_threshold is not None:
            slopes = np.diff(es[:, kj]) / np.diff(beta_knots)
            jumps = np.abs(np.diff(slopes))
            if jumps.size and jumps.max() > smooth_threshold:
                bi = int(np.argmax(jumps)) + 1
                raise NumericalError(
                    f"E[S] slope change {jumps.max():.3g} at beta knot "
                    f"{beta_knots[bi]:.4g}, k={k} exceeds threshold "
                    f"{smooth_threshold:.3g}")
        if interp_kind == "linear":
            integral = cumulative_trapezoid(es[:, kj], beta_knots, initial=0.0)
        else:
            spl = make_interp_spline(beta_knots, es[:, kj], k=2)
            anti = spl.antiderivative()
            integral = anti(beta_knots) - anti(0.0)
        logz[:, kj] = g.n * np.log(G) + integral

    meta = {"seed": seed, "sweeps": sweeps, "burnin": burnin, "n": g.n, "G": G,
            "interp_kind": interp_kind, "metric": g.metric}
    return ZGrid(beta_knots=beta_knots, k_knots=k_knots, logz=logz,
                 mean_potential=es, meta=meta)


def interp_log_z(zgrid: ZGrid, beta: float, k: float) -> float:
    """Bilinear interpolation of log Z at (beta, k); exact at knots."""
    bk, kk = zgrid.beta_knots, zgrid.k_knots
    if not bk[0] <= beta <= bk[-1]:
        raise ConfigError(f"beta={beta} outside grid support [{bk[0]}, {bk[-1]}]")
    if not kk[0] <= k <= kk[-1]:
        raise ConfigError(f"k={k} outside grid support [{kk[0]}, {kk[-1]}]")
    bi = min(np.searchsorted(bk, beta, side="right") - 1, len(bk) - 2)
    kj = min(np.searchsorted(kk, k, side="right") - 1, len(kk) - 2)
    tb = (beta - bk[bi]) / (bk[bi + 1] - bk[bi])
    tk = (k - kk[kj]) / (kk[kj + 1] - kk[kj])
    z = zgrid.logz
    return float((1 - tb) * (1 - tk) * z[bi, kj]
                 + tb * (1 - tk) * z[bi + 1, kj]
                 + (1 - tb) * tk * z[bi, kj + 1]
                 + tb * tk * z[bi + 1, kj + 1])
