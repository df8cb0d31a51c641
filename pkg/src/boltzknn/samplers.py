"""Label-configuration samplers at fixed (beta, k).

Systematic-scan Gibbs sweeps (numba-compiled, with incremental neighbour
class counts), monotone coupling-from-the-past for the two-class case,
a rejection-sampling envelope for supercritical beta, and the phase-scan
diagnostic used to calibrate beta_max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, NumericalError
from .model import potential
from .neighbors import NeighborGraph

__all__ = [
    "SweepSchedule",
    "CftpResult",
    "gibbs_sweep",
    "gibbs_sample",
    "gibbs_sample_record",
    "cftp_sample",
    "cftp_with_envelope",
    "phase_scan",
]


@dataclass
class SweepSchedule:
    """Deterministic site-visit order plus the seed of the uniform stream."""

    order: np.ndarray
    seed: int


@dataclass
class CftpResult:
    sample: np.ndarray
    start_epoch: int      # sweeps into the past at coalescence
    coalesced: bool
    attempts: int = 1     # envelope rejections + 1


@njit(cache=True)
def _sweeps_kernel(z, C, ptr, idx, wt, bk, aw, scan, U, record_S, S_out):
    """Systematic-scan sweeps, updating labels and counts in place.

    C[i, g] is the weighted neighbour count sum_j M[i,j] 1[z_j = g] for the
    symmetric adjacency M; it is maintained incrementally so a site update
    costs O(G) plus O(degree) only when the label actually changes.
    ``U`` holds one uniform per site update, shape (sweeps, n).
    """
    T = U.shape[0]
    n = z.shape[0]
    G = C.shape[1]
    probs = np.empty(G)
    for t in range(T):
        for s in range(n):
            i = scan[s]
            m = -1.0e300
            for g in range(G):
                e = bk * aw[g] * C[i, g]
                probs[g] = e
                if e > m:
                    m = e
            tot = 0.0
            for g in range(G):
                probs[g] = np.exp(probs[g] - m)
                tot += probs[g]
            r = U[t, s] * tot
            gnew = G - 1
            acc = 0.0
            for g in range(G):
                acc += probs[g]
                if r < acc:
                    gnew = g
                    break
            old = z[i]
            if gnew != old:
                for q in range(ptr[i], ptr[i + 1]):
                    j = idx[q]
                    w = wt[q]
                    C[j, old] -= w
                    C[j, gnew] += w
                z[i] = gnew
        if record_S:
            ssum = 0.0
            for i in range(n):
                ssum += aw[z[i]] * C[i, z[i]]
            S_out[t] = 0.5 * ssum


def _init_counts(z: np.ndarray, ptr, idx, wt, G: int) -> np.ndarray:
    n = z.shape[0]
    C = np.zeros((n, G), dtype=np.int64)
    rows = np.repeat(np.arange(n), np.diff(ptr))
    np.add.at(C, (rows, z[idx]), wt.astype(np.int64))
    return C


def _run_sweeps(z, g: NeighborGraph, beta: float, k: int, G: int, U: np.ndarray,
                weights=None, scan=None, record=False):
    ptr, idx, wt = g.adjacency(k)
    C = _init_counts(z, ptr, idx, wt, G)
    aw = np.ones(G) if weights is None else np.asarray(weights, dtype=float)
    if scan is None:
        scan = np.arange(g.n, dtype=np.int64)
    S_out = np.empty(U.shape[0] if record else 0)
    _sweeps_kernel(z, C, ptr, idx, wt, beta / k, aw, scan,
                   np.ascontiguousarray(U), record, S_out)
    return S_out / k if record else None


def _validate(g: NeighborGraph, beta: float, k: int, G: int):
    if beta < 0:
        raise ConfigError("beta must be >= 0")
    if not 1 <= k <= g.K:
        raise ConfigError(f"k={k} out of range [1, {g.K}]")
    if G < 2:
        raise ConfigError("G must be >= 2")


def gibbs_sweep(y: np.ndarray, g: NeighborGraph, beta: float, k: int, G: int,
                uniforms: np.ndarray | None = None, seed: int | None = None,
                schedule: SweepSchedule | None = None, weights=None) -> np.ndarray:
    """One systematic-scan sweep; one uniform variate per site."""
    _validate(g, beta, k, G)
    z = np.asarray(y, dtype=np.int64).copy()
    scan = schedule.order if schedule is not None else None
    if uniforms is None:
        if seed is None and schedule is not None:
            seed = schedule.seed
        uniforms = np.random.default_rng(seed).random(g.n)
    _run_sweeps(z, g, beta, k, G, uniforms[None, :], weights, scan)
    return z


def gibbs_sample(g: NeighborGraph, beta: float, k: int, G: int, n_sweeps: int,
                 seed: int | None = None, init: np.ndarray | None = None,
                 weights=None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Final state after ``n_sweeps`` systematic-scan sweeps.

    The initial state defaults to i.i.d. uniform labels.
    """
    _validate(g, beta, k, G)
    if n_sweeps < 1:
        raise ConfigError("n_sweeps must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    z = (rng.integers(0, G, g.n) if init is None
         else np.asarray(init, dtype=np.int64).copy())
    _run_sweeps(z, g, beta, k, G, rng.random((n_sweeps, g.n)), weights)
    return z


def gibbs_sample_record(g: NeighborGraph, beta: float, k: int, G: int,
                        n_sweeps: int, seed: int | None = None,
                        init: np.ndarray | None = None, weights=None,
                        rng: np.random.Generator | None = None):
    """As gibbs_sample, also returning S(y; k) recorded after every sweep."""
    _validate(g, beta, k, G)
    if rng is None:
        rng = np.random.default_rng(seed)
    z = (rng.integers(0, G, g.n) if init is None
         else np.asarray(init, dtype=np.int64).copy())
    S = _run_sweeps(z, g, beta, k, G, rng.random((n_sweeps, g.n)),
                    weights, record=True)
    return z, S


def _default_t_max(n: int) -> int:
    return max(1, 2 ** 20 // n)


def cftp_sample(g: NeighborGraph, beta: float, k: int, seed: int | None = None,
                t_max: int | None = None, weights=None,
                rng: np.random.Generator | None = None,
                check_sandwich: bool = True) -> CftpResult:
    """Exact draw from the two-class model by monotone coupling from the past.

    Twin chains start from the all-low and all-high saturated states and
    share one uniform per site update; the backward horizon doubles
    (1, 2, 4, ... sweeps), reusing earlier epochs' randomness.  The update
    is monotone for G=2 because the conditional probability of the high
    class is non-decreasing in the number of high-class neighbours, so
    coalescence of the extremal chains certifies an exact sample.
    """
    _validate(g, beta, k, 2)
    n = g.n
    if t_max is None:
        t_max = _default_t_max(n)
    if rng is None:
        rng = np.random.default_rng(seed)
    u_blocks: list[np.ndarray] = []  # u_blocks[t] drives the sweep at time -(t+1)
    T = 1
    while True:
        while len(u_blocks) < T:
            u_blocks.append(rng.random(n))
        lo = np.zeros(n, dtype=np.int64)
        hi = np.ones(n, dtype=np.int64)
        for t in range(T - 1, -1, -1):
            U = u_blocks[t][None, :]
            _run_sweeps(lo, g, beta, k, 2, U, weights)
            _run_sweeps(hi, g, beta, k, 2, U, weights)
            if check_sandwich and np.any(hi < lo):
                raise NumericalError("CFTP sandwich order violated")
        if np.array_equal(lo, hi):
            return CftpResult(sample=lo, start_epoch=T, coalesced=True)
        if 2 * T > t_max:
            return CftpResult(sample=hi, start_epoch=T, coalesced=False)
        T *= 2


def cftp_with_envelope(g: NeighborGraph, beta: float, k: int, beta0: float,
                       seed: int | None = None, t_max: int | None = None,
                       weights=None, max_attempts: int = 10_000) -> CftpResult:
    """Exact draw at a supercritical ``beta`` via rejection from ``beta0``.

    Draws z from the model at beta0 < beta by CFTP and accepts with
    probability exp((beta - beta0)(S(z; k) - S_max)) where S_max = n (the
    potential is maximal for constant labels), which is a valid rejection
    sampler for the target at ``beta``.
    """
    if not 0 <= beta0 <= beta:
        raise ConfigError("need 0 <= beta0 <= beta")
    aw_max = 1.0 if weights is None else float(np.max(weights))
    s_max = g.n * aw_max
    rng = np.random.default_rng(seed)
    for attempt in range(1, max_attempts + 1):
        res = cftp_sample(g, beta0, k, t_max=t_max, weights=weights, rng=rng)
        if not res.coalesced:
            res.attempts = attempt
            return res
        log_acc = (beta - beta0) * (potential(res.sample, g, k, weights) - s_max)
        if np.log(rng.random()) < log_acc:
            return CftpResult(sample=res.sample, start_epoch=res.start_epoch,
                              coalesced=True, attempts=attempt)
    raise NumericalError(f"envelope sampler: no acceptance in {max_attempts} attempts")


def phase_scan(g: NeighborGraph, betas: np.ndarray, k: int, sweeps: int,
               seed: int | None = None, G: int = 2, burnin: int | None = None,
               weights=None) -> np.ndarray:
    """Mean agreement fraction S(y)/n per beta, for choosing beta_max.

    Runs a Gibbs chain per beta (warm-started from the previous one, betas
    ascending); the knee towards 1 locates the phase-transition region.
    """
    betas = np.asarray(betas, dtype=float)
    if np.any(np.diff(betas) < 0):
        raise ConfigError("betas must be sorted ascending")
    if burnin is None:
        burnin = min(500, sweeps // 2)
    rng = np.random.default_rng(seed)
    out = np.empty(len(betas))
    state = rng.integers(0, G, g.n)
    for j, beta in enumerate(betas):
        state, S = gibbs_sample_record(g, beta, k, G, sweeps,
                                       init=state, weights=weights, rng=rng)
        out[j] = S[burnin:].mean() / g.n
    return out
