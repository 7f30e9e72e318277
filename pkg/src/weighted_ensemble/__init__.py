"""Weighted-ensemble resampling for finite-state Markov chains."""

from .binning import BinPartition
from .coarse import (
    CoarseModel,
    build_coarse_exact,
    build_coarse_mc,
    build_coarse_model,
    coarse_stationary,
    compute_v,
)
from .engine import (
    AdaptivePolicy,
    Ensemble,
    NaivePolicy,
    RngStream,
    RunRecord,
    SelectionOutcome,
    TraditionalPolicy,
    allocate_targets,
    bin_totals,
    empirical_estimate,
    init_ensemble,
    mean_children,
    mutate,
    run_we,
    select,
    stationary_init_ensemble,
    stochastic_round,
)
from .hill import (
    SourceSinkSpec,
    direct_mfpt,
    general_hill_average,
    hitting_probability,
    source_sink_kernel,
    we_hill_hitting,
    we_hill_mfpt,
)
from .markov import (
    ConvergenceError,
    Distribution,
    Observable,
    TransitionMatrix,
    apply_left,
    apply_right,
    build_three_well_chain,
    power,
    second_eigenvalue_modulus,
    stationary,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
