"""Markov-state-model preconditioner: coarse matrix P, coarse observable u,
coarse stationary vector mu, and the per-generation variance-proxy table v.

v[p][r] estimates, inside bin r, the local mutation variance
K(K^{n-p-1}f)^2 - (K^{n-p}f)^2 that drives the square-root allocation rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .binning import BinPartition
from .markov import Distribution, Observable, TransitionMatrix, stationary

# pre-clamp values below this are a bug, not roundoff: Jensen forbids them
V_CLAMP = -1e-10


@dataclass(frozen=True)
class CoarseModel:
    """Coarse transition matrix over bins plus everything derived from it."""

    P: TransitionMatrix
    u: np.ndarray = field(repr=False)
    mu: Distribution = None
    v: np.ndarray = field(repr=False, default=None)
    horizon: int = 0

    @property
    def n_bins(self) -> int:
        return self.P.n_states


def build_coarse_exact(
    K: TransitionMatrix,
    bins: BinPartition,
    zeta: Distribution,
    f: Observable,
) -> tuple[TransitionMatrix, np.ndarray]:
    """Exact bin-to-bin transition probabilities and bin averages of f under
    the sampling measure zeta. Every bin needs positive zeta mass."""
    R = bins.n_bins
    mass = np.bincount(bins.bin_of, weights=zeta.weights, minlength=R)
    if np.any(mass <= 0):
        bad = int(np.argmin(mass)) + 1
        raise ValueError(f"bin {bad} has zero sampling mass under zeta")
    member = bins.membership_matrix()  # states x bins
    # P_rs = sum_{x in B^r} zeta(x) sum_{y in B^s} K(x,y) / zeta(B^r)
    flow = member.T @ (zeta.weights[:, None] * K.matrix) @ member
    P = flow / mass[:, None]
    u = (member.T @ (zeta.weights * f.values)) / mass
    return TransitionMatrix(P / P.sum(axis=1, keepdims=True)), u


def build_coarse_mc(
    step_sampler: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    bins: BinPartition,
    zeta: Distribution,
    f: Observable,
    total_samples: int,
    rng: np.random.Generator,
) -> tuple[TransitionMatrix, np.ndarray]:
    """Monte Carlo coarse model from one-step trajectories started at zeta.

    The sample budget is allocated to start states proportionally to their
    zeta mass (stratified), so bins with positive mass are always visited when
    the budget allows. ``step_sampler(states, rng)`` returns one K-step from
    each given state.
    """
    from .engine import largest_remainder

    R = bins.n_bins
    if total_samples < R:
        raise ValueError(f"need at least {R} samples, one per bin")
    n_starts = largest_remainder(total_samples * zeta.weights, total_samples)
    starts = np.repeat(np.arange(zeta.n_states), n_starts)
    ends = step_sampler(starts, rng)
    sb = bins.bin_of[starts]
    eb = bins.bin_of[ends]
    counts = np.zeros((R, R))
    np.add.at(counts, (sb, eb), 1.0)
    visits = counts.sum(axis=1)
    if np.any(visits == 0):
        bad = int(np.argmin(visits)) + 1
        raise ValueError(
            f"bin {bad} received no samples; increase the sample budget"
        )
    P = counts / visits[:, None]
    u_num = np.bincount(sb, weights=f.values[starts], minlength=R)
    u = u_num / visits
    return TransitionMatrix(P), u


def kernel_step_sampler(K: TransitionMatrix):
    """One-step sampler for a known transition matrix (inverse-CDF)."""
    cum = K.row_cumsums()

    def step(states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(states.size)
        return (u[:, None] >= cum[states]).sum(axis=1)

    return step


def compute_v(P: TransitionMatrix, u: np.ndarray, n: int) -> np.ndarray:
    """Variance-proxy table: v[p] = P (P^{n-p-1} u)^2 - (P^{n-p} u)^2, entrywise
    squares, computed by the vector recursion w_k = P w_{k-1}."""
    if n < 1:
        raise ValueError("horizon must be >= 1")
    u = np.asarray(u, dtype=float)
    R = u.size
    w = np.empty((n + 1, R))  # w[k] = P^k u
    w[0] = u
    for k in range(1, n + 1):
        w[k] = P.matrix @ w[k - 1]
    v = np.empty((n, R))
    for p in range(n):
        v[p] = P.matrix @ (w[n - p - 1] ** 2) - w[n - p] ** 2
    worst = v.min()
    if worst < V_CLAMP:
        raise ValueError(
            f"variance proxy is {worst:.3e} < {V_CLAMP}; this violates Jensen "
            "and signals a bug in P or u"
        )
    return np.maximum(v, 0.0)


def coarse_stationary(P: TransitionMatrix) -> Distribution:
    """Stationary vector of the coarse matrix (left eigenvector for eigenvalue 1)."""
    return stationary(P)


def build_coarse_model(
    K: TransitionMatrix,
    bins: BinPartition,
    zeta: Distribution,
    f: Observable,
    horizon: int,
) -> CoarseModel:
    """Exact coarse model with its stationary vector and v table for one horizon."""
    P, u = build_coarse_exact(K, bins, zeta, f)
    return CoarseModel(
        P=P, u=u, mu=coarse_stationary(P), v=compute_v(P, u, horizon), horizon=horizon
    )
