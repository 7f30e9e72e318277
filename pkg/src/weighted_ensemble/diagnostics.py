"""Numerical verification of the martingale structure of WE sampling.

For M_p = eta_p K^{n-p} f, the run is a martingale, E[M_n] = E[f(X_n)], and
E[M_n^2] decomposes into E[M_0^2] plus accumulated conditional variances from
mutation and selection. On a finite chain every conditional term is computable
exactly per generation, which makes these checks much sharper than pure Monte
Carlo comparisons.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .engine import (
    Ensemble,
    RngStream,
    RunRecord,
    SelectionOutcome,
    SelectionPolicy,
    empirical_estimate,
    run_we,
)
from .markov import Observable, TransitionMatrix

Z_THRESHOLD = 4.0


@dataclass(frozen=True)
class GSequence:
    """g[p] = K^{n-p} f for p = 0..n, plus the derived local-variance vectors.

    local_var[p](x) = K g_{p+1}^2 (x) - g_p(x)^2 is the one-step conditional
    variance of g_{p+1} started at x; it is nonnegative by Jensen.
    """

    g: np.ndarray = field(repr=False)  # (n+1, states)
    kg2: np.ndarray = field(repr=False)  # (n, states): K applied to g[p+1]^2
    local_var: np.ndarray = field(repr=False)  # (n, states)

    @property
    def horizon(self) -> int:
        return self.g.shape[0] - 1


def g_sequence(K: TransitionMatrix, f: Observable, n: int) -> GSequence:
    """Backward recursion g[n] = f, g[p] = K g[p+1]."""
    if n < 0:
        raise ValueError("horizon must be >= 0")
    m = K.n_states
    g = np.empty((n + 1, m))
    g[n] = f.values
    for p in range(n - 1, -1, -1):
        g[p] = K.matrix @ g[p + 1]
    kg2 = np.empty((n, m))
    for p in range(n):
        kg2[p] = K.matrix @ (g[p + 1] ** 2)
    local_var = kg2 - g[:n] ** 2
    if local_var.size and local_var.min() < -1e-10:
        raise AssertionError("local variance below -1e-10; numerical bug")
    return GSequence(g=g, kg2=kg2, local_var=np.maximum(local_var, 0.0))


def mutation_variance_term(
    selected: SelectionOutcome, g: GSequence, p: int
) -> float:
    """Exact conditional mutation variance of the step from the selected
    particles: sum_i w_i^2 [K g_{p+1}^2 - g_p^2](xi_i)."""
    if not 0 <= p <= g.horizon - 1:
        raise ValueError("p must satisfy 0 <= p <= n-1")
    if selected.n_selected == 0:
        return 0.0
    return float(selected.weights**2 @ g.local_var[p][selected.states])


def expected_c_squared(beta: np.ndarray) -> np.ndarray:
    """E[C^2] under stochastic rounding with mean beta: floor^2 + (2 floor + 1) frac."""
    beta = np.asarray(beta, dtype=float)
    low = np.floor(beta)
    return low**2 + (2.0 * low + 1.0) * (beta - low)


def selection_variance_term(
    e: Ensemble, beta: np.ndarray, g: GSequence, p: int
) -> float:
    """Exact conditional selection variance:
    sum_j w_j^2 (E[C^2]/beta^2 - 1) g_p(xi_j)^2, zero iff every beta is integer."""
    if not 0 <= p <= g.horizon - 1:
        raise ValueError("p must satisfy 0 <= p <= n-1")
    beta = np.asarray(beta, dtype=float)
    if e.n_particles and np.any(beta <= 0):
        raise ValueError("beta must be positive for every occupied particle")
    if e.n_particles == 0:
        return 0.0
    ratio = expected_c_squared(beta) / beta**2 - 1.0
    return float((e.weights**2 * ratio) @ (g.g[p][e.states] ** 2))


def conditional_mutation_variance(
    e: Ensemble, beta: np.ndarray, g: GSequence, p: int
) -> float:
    """Pre-selection form sum_j w_j^2 / beta_j * [K g_{p+1}^2 - g_p^2](xi_j),
    the quantity the square-root allocation rule minimizes.

    Particles with zero local variance contribute nothing, so beta = 0 is
    tolerated there (the allocation formula assigns them no children); beta
    must be positive wherever the local variance is positive.
    """
    beta = np.asarray(beta, dtype=float)
    var = g.local_var[p][e.states]
    if np.any(beta < 0) or np.any((beta == 0) & (var > 0)):
        raise ValueError("beta must be positive wherever the local variance is")
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(var > 0, e.weights**2 * var / beta, 0.0)
    return float(terms.sum())


def optimal_allocation(
    e: Ensemble, g: GSequence, p: int, total_target: float
) -> np.ndarray:
    """Variance-minimizing mean children counts for a fixed expected total:
    beta_j proportional to w_j sqrt(local variance at xi_j), summing to N."""
    score = e.weights * np.sqrt(g.local_var[p][e.states])
    denom = score.sum()
    if denom <= 0:
        raise ValueError(
            "all local variances vanish; every allocation is optimal"
        )
    return total_target * score / denom


@dataclass(frozen=True)
class CheckReport:
    """One verification row; `value` is the MC side, `reference` the exact or
    analytically accumulated side."""

    check: str
    n: int
    policy: str
    value: float
    reference: float
    std_err: float
    z: float
    passed: bool


def _policy_name(policy: SelectionPolicy) -> str:
    return type(policy).__name__.removesuffix("Policy").lower()


def check_unbiasedness(
    K: TransitionMatrix,
    f: Observable,
    policy: SelectionPolicy,
    init: Ensemble,
    n: int,
    reps: int,
    rng: RngStream,
    v_table: Optional[np.ndarray] = None,
) -> CheckReport:
    """Replicate mean of eta_n(f) against the exact eta_0 K^n f (the initial
    ensemble is fixed across replicates, so the reference is deterministic)."""
    if reps < 100:
        raise ValueError("need at least 100 replicates")
    gseq = g_sequence(K, f, n)
    exact = float(init.weights @ gseq.g[0][init.states])
    vals = np.empty(reps)
    cum = K.row_cumsums()
    for rep in range(reps):
        rec = run_we(K, f, policy, init, n, rng.for_replicate(rep),
                     v_table=v_table, row_cumsums=cum)
        vals[rep] = rec.eta_f[n]
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(reps))
    z = (mean - exact) / se if se > 0 else 0.0
    return CheckReport(
        check="unbiasedness",
        n=n,
        policy=_policy_name(policy),
        value=mean,
        reference=exact,
        std_err=se,
        z=float(z),
        passed=bool(abs(z) <= Z_THRESHOLD),
    )


def doob_terms(rec: RunRecord, gseq: GSequence) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-generation (mutation, selection) conditional variance terms
    along one recorded trajectory; requires run_we(record_history=True)."""
    if rec.history is None:
        raise ValueError("run record has no history; rerun with record_history=True")
    n_steps = len(rec.history)
    mut = np.zeros(gseq.horizon)
    sel = np.zeros(gseq.horizon)
    for p, snap in enumerate(rec.history[: gseq.horizon]):
        mut[p] = mutation_variance_term(snap.outcome, gseq, p)
        sel[p] = selection_variance_term(
            snap.ensemble, snap.outcome.mean_children, gseq, p
        )
    del n_steps
    return mut, sel


def check_doob_identity(
    K: TransitionMatrix,
    f: Observable,
    policy: SelectionPolicy,
    init: Ensemble,
    n: int,
    reps: int,
    rng: RngStream,
    v_table: Optional[np.ndarray] = None,
) -> CheckReport:
    """E[M_n^2] vs M_0^2 + accumulated exact conditional variance terms.

    Both sides are estimated from the same replicates, so the comparison uses
    the standard error of the per-replicate difference.
    """
    gseq = g_sequence(K, f, n)
    m0 = float(init.weights @ gseq.g[0][init.states])
    lhs = np.empty(reps)
    accum = np.empty(reps)
    cum = K.row_cumsums()
    for rep in range(reps):
        rec = run_we(K, f, policy, init, n, rng.for_replicate(rep),
                     v_table=v_table, record_history=True, row_cumsums=cum)
        lhs[rep] = rec.eta_f[n] ** 2
        mut, sel = doob_terms(rec, gseq)
        accum[rep] = mut.sum() + sel.sum()
    diff = lhs - (m0**2 + accum)
    se = float(diff.std(ddof=1) / np.sqrt(reps))
    mean_diff = float(diff.mean())
    z = mean_diff / se if se > 0 else 0.0
    return CheckReport(
        check="doob_identity",
        n=n,
        policy=_policy_name(policy),
        value=float(lhs.mean()),
        reference=float(m0**2 + accum.mean()),
        std_err=se,
        z=float(z),
        passed=bool(abs(z) <= Z_THRESHOLD),
    )
