"""Three-well experiment driver: setup, replicate sweeps, histograms.

The benchmark chain is the 90-state three-well landscape with resampling lag
4, bins of width 3 (R = 30), observable f = indicator of states 28..33, and
the stationary-average workflow started from the coarse-model preconditioned
ensemble. Replicates can fan out over worker processes; results depend only
on (seed, config), never on the worker count.
"""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .binning import BinPartition
from .coarse import CoarseModel, build_coarse_model, compute_v
from .engine import (
    AdaptivePolicy,
    Ensemble,
    NaivePolicy,
    RngStream,
    SelectionPolicy,
    TraditionalPolicy,
    run_we,
    stationary_init_ensemble,
)
from .markov import (
    Distribution,
    Observable,
    TransitionMatrix,
    build_three_well_chain,
    stationary,
)

MODES = ("adaptive", "traditional", "naive")


@dataclass(frozen=True)
class ChainSetup:
    """A chain plus binning, observable, and sampling measure for experiments."""

    K: TransitionMatrix
    bins: BinPartition
    f: Observable
    zeta: Distribution
    Q: Optional[TransitionMatrix] = None  # one-step matrix when K is a lag power


def three_well_setup(lag: int = 4, bin_width: int = 3,
                     f_lo: int = 28, f_hi: int = 33) -> ChainSetup:
    """The benchmark configuration; f_lo..f_hi are 1-indexed states."""
    Q, K = build_three_well_chain(lag)
    n = K.n_states
    bins = BinPartition.from_width(n, bin_width)
    f = Observable.indicator(range(f_lo - 1, f_hi), n)
    zeta = Distribution(np.full(n, 1.0 / n))
    return ChainSetup(K=K, bins=bins, f=f, zeta=zeta, Q=Q)


def make_policy(
    mode: str,
    bins: BinPartition,
    n_particles: int,
    n_floor: float = 1.0,
    per_bin_target: float = 5.0,
) -> SelectionPolicy:
    if mode == "adaptive":
        return AdaptivePolicy(bins, float(n_particles), n_floor)
    if mode == "traditional":
        return TraditionalPolicy(bins, per_bin_target)
    if mode == "naive":
        return NaivePolicy()
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class SweepResult:
    """Replicate statistics for one (mode, horizon) cell."""

    mode: str
    n: int
    reps: int
    etas: np.ndarray  # final eta_n(f) per replicate
    extinct_count: int
    exact: float  # eta_0 K^n f from the deterministic initial ensemble
    hist_counts: Optional[np.ndarray] = None  # mean per-replicate count fractions
    hist_weights: Optional[np.ndarray] = None  # mean per-replicate weight fractions
    traces: Optional[np.ndarray] = None  # (reps, n+1) eta per generation
    weight_traces: Optional[np.ndarray] = None  # (reps, n+1) total weight
    count_traces: Optional[np.ndarray] = None  # (reps, n+1) particle counts
    extinct_flags: Optional[np.ndarray] = None  # (reps,) bool

    @property
    def mean(self) -> float:
        return float(self.etas.mean())

    @property
    def std(self) -> float:
        return float(self.etas.std(ddof=1)) if self.reps > 1 else 0.0

    @property
    def std_err(self) -> float:
        return self.std / np.sqrt(self.reps)


def _replicate_batch(args) -> dict:
    """Worker: run a contiguous block of replicates, return etas + histograms."""
    (K, f, policy, init, n, seed, rep_lo, rep_hi, v_table, n_states) = args
    stream = RngStream(seed)
    cum = K.row_cumsums()
    size = rep_hi - rep_lo
    etas = np.empty(size)
    traces = np.empty((size, n + 1))
    weights = np.empty((size, n + 1))
    counts = np.empty((size, n + 1), dtype=np.int64)
    flags = np.zeros(size, dtype=bool)
    hist_c = np.zeros(n_states)
    hist_w = np.zeros(n_states)
    for rep in range(rep_lo, rep_hi):
        rec = run_we(K, f, policy, init, n, stream.for_replicate(rep),
                     v_table=v_table, row_cumsums=cum)
        k = rep - rep_lo
        etas[k] = rec.eta_f[n]
        traces[k] = rec.eta_f
        weights[k] = rec.total_weight
        counts[k] = rec.num_particles
        flags[k] = rec.extinct
        if rec.extinct:
            continue
        final = rec.final
        hist_c += np.bincount(final.states, minlength=n_states) / final.n_particles
        hist_w += np.bincount(final.states, weights=final.weights,
                              minlength=n_states) / final.total_weight
    return {
        "etas": etas, "traces": traces, "weights": weights, "counts": counts,
        "flags": flags, "hist_c": hist_c, "hist_w": hist_w,
    }


def run_sweep_cell(
    setup: ChainSetup,
    mode: str,
    n: int,
    reps: int,
    seed: int,
    n_particles: int = 150,
    n_floor: float = 1.0,
    per_bin_target: float = 5.0,
    model: Optional[CoarseModel] = None,
    init: Optional[Ensemble] = None,
    threads: int = 1,
    keep_traces: bool = False,
) -> SweepResult:
    """Run one (mode, horizon) cell of the experiment.

    The coarse model preconditions the initial ensemble for every mode; only
    the adaptive mode also uses its v table during selection. The v table is
    recomputed for the cell's own horizon.
    """
    if model is None:
        model = build_coarse_model(setup.K, setup.bins, setup.zeta, setup.f,
                                   horizon=max(n, 1))
    if init is None:
        init = stationary_init_ensemble(model.mu, setup.bins, n_particles)
    policy = make_policy(mode, setup.bins, n_particles, n_floor, per_bin_target)
    v_table = compute_v(model.P, model.u, n) if n >= 1 else None

    # exact reference from the deterministic initial empirical distribution
    gn = setup.f.values.copy()
    for _ in range(n):
        gn = setup.K.matrix @ gn
    exact = float(init.weights @ gn[init.states])

    n_states = setup.K.n_states
    jobs = []
    workers = max(1, int(threads))
    bounds = np.linspace(0, reps, min(workers, reps) * 4 + 1).astype(int) \
        if workers > 1 else np.array([0, reps])
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi > lo:
            jobs.append((setup.K, setup.f, policy, init, n, seed,
                         int(lo), int(hi), v_table, n_states))
    if workers == 1 or len(jobs) == 1:
        parts = [_replicate_batch(job) for job in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_replicate_batch, jobs))

    etas = np.concatenate([p["etas"] for p in parts])
    flags = np.concatenate([p["flags"] for p in parts])
    extinct = int(flags.sum())
    alive = reps - extinct
    hist_c = sum(p["hist_c"] for p in parts) / alive if alive else np.zeros(n_states)
    hist_w = sum(p["hist_w"] for p in parts) / alive if alive else np.zeros(n_states)
    return SweepResult(
        mode=mode,
        n=n,
        reps=reps,
        etas=etas,
        extinct_count=extinct,
        exact=exact,
        hist_counts=hist_c,
        hist_weights=hist_w,
        traces=np.concatenate([p["traces"] for p in parts]) if keep_traces else None,
        weight_traces=np.concatenate([p["weights"] for p in parts]) if keep_traces else None,
        count_traces=np.concatenate([p["counts"] for p in parts]) if keep_traces else None,
        extinct_flags=flags,
    )


def stationary_reference(setup: ChainSetup) -> float:
    """pi(f) from the exact stationary solve of the chain kernel."""
    pi = stationary(setup.K)
    return float(pi.weights @ setup.f.values)
