"""Random-walk Metropolis-Hastings over (beta, k).

Three targets are supported: the pseudo-likelihood surrogate, the
path-sampling target backed by a tabulated log Z grid, and the
auxiliary-variable scheme in which an exact (or long-Gibbs) draw from the
likelihood makes the normalising constants cancel from the acceptance
ratio.  beta moves on a logistic scale, k by a uniform step proposal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit, log_expit

from .errors import ConfigError
from .model import (Prior, neighbor_class_counts, potential, potential_all_k,
                    pseudo_log_likelihood)
from .neighbors import NeighborGraph
from .normalizer import ZGrid, interp_log_z
from .samplers import cftp_sample, gibbs_sample

__all__ = [
    "ProposalConfig",
    "ChainTrace",
    "ModelContext",
    "PluginEstimate",
    "propose",
    "mh_step_pseudo",
    "mh_step_path",
    "mh_step_moller",
    "run_chain",
    "max_pseudo_likelihood",
]


@dataclass
class ProposalConfig:
    tau2: float = 0.05
    r: int = 3
    beta_max: float = 4.0
    K: int = 1

    def __post_init__(self):
        if self.tau2 <= 0:
            raise ConfigError("tau2 must be positive")
        if not 1 <= self.r <= max(self.K, 1):
            raise ConfigError("r must be in [1, K]")


@dataclass
class PluginEstimate:
    beta_hat: float
    k_hat: int


@dataclass
class ChainTrace:
    beta: np.ndarray
    k: np.ndarray
    accepted: np.ndarray
    kind: str
    seed: int | None = None
    aux_potential: np.ndarray | None = None
    cftp_timeouts: int = 0
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.beta)

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean())

    def post_burnin(self, burnin: int) -> "ChainTrace":
        aux = None if self.aux_potential is None else self.aux_potential[burnin:]
        return ChainTrace(beta=self.beta[burnin:], k=self.k[burnin:],
                          accepted=self.accepted[burnin:], kind=self.kind,
                          seed=self.seed, aux_potential=aux,
                          cftp_timeouts=self.cftp_timeouts, config=self.config)

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w") as f:
            f.write(f"# kind={self.kind}\n")
            f.write(f"# seed={self.seed}\n")
            f.write(f"# config={json.dumps(self.config, sort_keys=True)}\n")
            cols = "iter,beta,k,accepted"
            if self.aux_potential is not None:
                cols += ",aux_potential"
            f.write(cols + "\n")
            for i in range(len(self)):
                row = (f"{i},{float(self.beta[i])!r},{int(self.k[i])},"
                       f"{int(self.accepted[i])}")
                if self.aux_potential is not None:
                    row += f",{float(self.aux_potential[i])!r}"
                f.write(row + "\n")

    @classmethod
    def from_csv(cls, path) -> "ChainTrace":
        path = Path(path)
        kind, seed, config = "unknown", None, {}
        with open(path) as f:
            lines = f.readlines()
        body_start = 0
        for line in lines:
            if not line.startswith("#"):
                break
            body_start += 1
            key, _, val = line[1:].strip().partition("=")
            if key == "kind":
                kind = val
            elif key == "seed":
                seed = None if val == "None" else int(val)
            elif key == "config":
                config = json.loads(val)
        header = lines[body_start].strip().split(",")
        data = np.genfromtxt(lines[body_start + 1:], delimiter=",")
        data = np.atleast_2d(data)
        cols = {name: data[:, j] for j, name in enumerate(header)}
        aux = cols.get("aux_potential")
        return cls(beta=cols["beta"], k=cols["k"].astype(int),
                   accepted=cols["accepted"].astype(bool), kind=kind,
                   seed=seed, aux_potential=aux, config=config)


class ModelContext:
    """Read-only bundle of graph, training labels and prior, with caches."""

    def __init__(self, graph: NeighborGraph, y: np.ndarray, G: int,
                 prior: Prior):
        y = np.asarray(y, dtype=np.int64)
        if y.shape != (graph.n,):
            raise ConfigError("label vector length must match the graph")
        if y.min() < 0 or y.max() >= G:
            raise ConfigError("labels must lie in {0..G-1}")
        if prior.K > graph.K:
            raise ConfigError("prior K exceeds the graph's K")
        self.graph = graph
        self.y = y
        self.G = G
        self.prior = prior
        self.weights = prior.weights(G)
        if np.allclose(self.weights, 1.0):
            self.weights = None
        self._s_train = potential_all_k(y, graph, self.weights)
        self._counts: dict[int, np.ndarray] = {}

    @property
    def n(self) -> int:
        return self.graph.n

    def s_train(self, k: int) -> float:
        """S(y_train; k)."""
        return float(self._s_train[k - 1])

    def _counts_for(self, k: int) -> np.ndarray:
        c = self._counts.get(k)
        if c is None:
            c = neighbor_class_counts(self.y, self.graph, k, self.G)
            if self.weights is not None:
                c = c * self.weights[None, :]
            self._counts[k] = c
        return c

    def pseudo_ll(self, beta: float, k: int) -> float:
        return pseudo_log_likelihood(self.y, self.graph, beta, k, self.G,
                                     counts=self._counts_for(k))


def _theta_of(beta: float, beta_max: float) -> float:
    x = min(max(beta / beta_max, 1e-12), 1 - 1e-12)
    return float(np.log(x) - np.log1p(-x))


def _k_neighbourhood_size(k: int, r: int, K: int) -> int:
    lo = max(1, k - r)
    hi = min(K, k + r)
    return hi - lo + 1 - 1  # exclude k itself


def propose(state, cfg: ProposalConfig, rng: np.random.Generator):
    """One random-walk proposal for (beta, k).

    Returns ((beta', k'), log Q-ratio for the k step, log Jacobian ratio
    for the logistic beta reparameterisation).
    """
    beta, k = state
    theta = _theta_of(beta, cfg.beta_max)
    theta_new = theta + np.sqrt(cfg.tau2) * rng.standard_normal()
    beta_new = cfg.beta_max * expit(theta_new)

    lo = max(1, k - cfg.r)
    hi = min(cfg.K, k + cfg.r)
    choices = [j for j in range(lo, hi + 1) if j != k]
    k_new = int(choices[rng.integers(len(choices))]) if choices else k
    size_fwd = max(len(choices), 1)
    size_back = _k_neighbourhood_size(k_new, cfg.r, cfg.K)
    log_q_ratio = np.log(size_fwd) - np.log(size_back)

    # d beta / d theta = beta_max * sigmoid(theta) * (1 - sigmoid(theta))
    log_jac_ratio = (log_expit(theta_new) + log_expit(-theta_new)
                     - log_expit(theta) - log_expit(-theta))
    return (float(beta_new), k_new), float(log_q_ratio), float(log_jac_ratio)


def _accept(log_rho: float, rng: np.random.Generator) -> bool:
    return log_rho >= 0 or np.log(rng.random()) < log_rho


def mh_step_pseudo(state, ctx: ModelContext, cfg: ProposalConfig,
                   rng: np.random.Generator):
    """One MH step targeting the pseudo-likelihood posterior."""
    (beta, k) = state
    new, log_q, log_jac = propose(state, cfg, rng)
    log_rho = (ctx.pseudo_ll(*new) - ctx.pseudo_ll(beta, k) + log_q + log_jac)
    if _accept(log_rho, rng):
        return new, True
    return state, False


def mh_step_path(state, ctx: ModelContext, cfg: ProposalConfig, zgrid: ZGrid,
                 rng: np.random.Generator):
    """One MH step targeting the path-sampling (Z-grid) posterior."""
    (beta, k) = state
    new, log_q, log_jac = propose(state, cfg, rng)
    log_rho = (new[0] * ctx.s_train(new[1]) - interp_log_z(zgrid, *new)
               - beta * ctx.s_train(k) + interp_log_z(zgrid, beta, k)
               + log_q + log_jac)
    if _accept(log_rho, rng):
        return new, True
    return state, False


def mh_step_moller(state, z: np.ndarray, ctx: ModelContext,
                   cfg: ProposalConfig, plugin: PluginEstimate, inner,
                   rng: np.random.Generator):
    """One auxiliary-variable MH step; Z(beta, k) cancels from the ratio.

    ``inner`` draws z' exactly (or approximately, via long Gibbs) from the
    likelihood at the proposed parameters; see ``run_chain`` for the two
    available kinds.  Returns (state, z, accepted, timeout_flag).
    """
    (beta, k) = state
    new, log_q, log_jac = propose(state, cfg, rng)
    z_new, ok = inner(new[0], new[1], rng)
    if not ok:
        return state, z, False, True
    g = ctx.graph
    w = ctx.weights
    bh, kh = plugin.beta_hat, plugin.k_hat
    log_rho = (
        new[0] * ctx.s_train(new[1]) - beta * ctx.s_train(k)
        + bh * (potential(z_new, g, kh, w) - potential(z, g, kh, w))
        + beta * potential(z, g, k, w) - new[0] * potential(z_new, g, new[1], w)
        + log_q + log_jac)
    if _accept(log_rho, rng):
        return new, z_new, True, False
    return state, z, False, False


def run_chain(kind: str, ctx: ModelContext, iters: int, burnin: int,
              cfg: ProposalConfig, seed: int | None = None,
              zgrid: ZGrid | None = None, plugin: PluginEstimate | None = None,
              inner_sweeps: int = 500, cftp_t_max: int | None = None,
              plugin_update_at: int | None = 10_000,
              init=None) -> ChainTrace:
    """Run a full MH chain of ``iters`` recorded steps.

    ``kind`` is one of ``pseudo``, ``path``, ``moller-gibbs``,
    ``moller-perfect``.  For the auxiliary-variable kinds, the plug-in
    estimate is re-set to the running posterior mean at iteration
    ``plugin_update_at`` (k rounded to the nearest integer, ties toward
    the smaller value).  The trace includes the burn-in portion.
    """
    if kind not in ("pseudo", "path", "moller-gibbs", "moller-perfect"):
        raise ConfigError(f"unknown chain kind {kind!r}")
    if not iters > burnin >= 0:
        raise ConfigError("need iters > burnin >= 0")
    if kind == "path" and zgrid is None:
        raise ConfigError("path target requires a Z grid")
    moller = kind.startswith("moller")
    if moller and plugin is None:
        raise ConfigError("auxiliary-variable targets require a plug-in estimate")
    if kind == "moller-perfect" and ctx.G != 2:
        raise ConfigError("perfect sampling inner draws require G = 2")

    rng = np.random.default_rng(seed)
    if init is None:
        init = (cfg.beta_max / 2.0, int(np.ceil(cfg.K / 2)))
    state = (float(init[0]), int(init[1]))

    betas = np.empty(iters)
    ks = np.empty(iters, dtype=np.int64)
    accepted = np.zeros(iters, dtype=bool)
    aux = np.empty(iters) if moller else None
    timeouts = 0

    if moller:
        plugin = PluginEstimate(plugin.beta_hat, int(plugin.k_hat))

        if kind == "moller-gibbs":
            def inner(beta, k, rng):
                return gibbs_sample(ctx.graph, beta, k, ctx.G, inner_sweeps,
                                    weights=ctx.weights, rng=rng), True
        else:
            def inner(beta, k, rng):
                res = cftp_sample(ctx.graph, beta, k, weights=ctx.weights,
                                  t_max=cftp_t_max, rng=rng)
                return res.sample, res.coalesced

        z, ok = inner(state[0], state[1], rng)
        while not ok:  # retry the initial draw at lower beta if CFTP stalls
            timeouts += 1
            state = (state[0] / 2.0, state[1])
            z, ok = inner(state[0], state[1], rng)

    for it in range(iters):
        if moller and plugin_update_at is not None and it == plugin_update_at:
            k_mean = ks[:it].mean()
            k_hat = int(np.clip(np.ceil(k_mean - 0.5), 1, cfg.K))
            plugin = PluginEstimate(float(betas[:it].mean()), k_hat)
        if kind == "pseudo":
            state, acc = mh_step_pseudo(state, ctx, cfg, rng)
        elif kind == "path":
            state, acc = mh_step_path(state, ctx, cfg, zgrid, rng)
        else:
            state, z, acc, to = mh_step_moller(state, z, ctx, cfg, plugin,
                                               inner, rng)
            timeouts += to
            aux[it] = potential(z, ctx.graph, state[1], ctx.weights) / ctx.n
        betas[it], ks[it], accepted[it] = state[0], state[1], acc

    config = {"iters": iters, "burnin": burnin, "tau2": cfg.tau2, "r": cfg.r,
              "beta_max": cfg.beta_max, "K": cfg.K, "n": ctx.n, "G": ctx.G,
              "inner_sweeps": inner_sweeps if moller else None,
              "plugin_update_at": plugin_update_at if moller else None}
    return ChainTrace(beta=betas, k=ks, accepted=accepted, kind=kind,
                      seed=seed, aux_potential=aux, cftp_timeouts=timeouts,
                      config=config)


def max_pseudo_likelihood(ctx: ModelContext,
                          beta_tol: float = 1e-6) -> PluginEstimate:
    """Maximise the pseudo-likelihood: exact search over k, golden-section
    (bounded scalar minimisation) over beta within the prior support."""
    best = (-np.inf, 0.0, 1)
    for k in range(1, ctx.prior.K + 1):
        res = minimize_scalar(lambda b: -ctx.pseudo_ll(b, k),
                              bounds=(0.0, ctx.prior.beta_max),
                              method="bounded",
                              options={"xatol": beta_tol})
        if -res.fun > best[0]:
            best = (-res.fun, float(res.x), k)
    return PluginEstimate(beta_hat=best[1], k_hat=best[2])
