"""End-to-end acceptance checks on the 90-state three-well benchmark.

Each test prints a single machine-readable PASS/FAIL line. Expected values
marked "frozen" were computed once by independent linear-algebra oracles
(dense matrix powers, stationary solves, absorbing-chain solves) and are
hard-coded so regressions are caught exactly.
"""
import numpy as np
import pytest

from weighted_ensemble import (
    AdaptivePolicy,
    BinPartition,
    Distribution,
    Ensemble,
    NaivePolicy,
    Observable,
    RngStream,
    SourceSinkSpec,
    TransitionMatrix,
    direct_mfpt,
    general_hill_average,
    hitting_probability,
    run_we,
    source_sink_kernel,
    stationary,
    stochastic_round,
    we_hill_mfpt,
)
from weighted_ensemble import cli
from weighted_ensemble.coarse import compute_v
from weighted_ensemble.diagnostics import (
    check_doob_identity,
    conditional_mutation_variance,
    doob_terms,
    g_sequence,
    optimal_allocation,
)
from weighted_ensemble.experiment import make_policy, run_sweep_cell

# frozen oracle values for the three-well chain (lag 4, bins of width 3,
# f = indicator of states 28..33, N = 150 particles, floor 1)
PI_F = 2.103011022441123e-05  # pi(f) from the exact stationary solve
EXACT_ETA0_KN_F = {
    0: 0.0002870710157080816,
    1: 0.0002906213896649607,
    5: 0.00012600364146848864,
    30: 2.109219076968996e-05,
}  # eta_0 K^n f from the deterministic initial ensemble, dense matrix powers
MFPT_ORACLE = 1523054.6002034727  # E[tau_{81..90}] from state 1, linear solve
PI_SINK = 6.565733733541416e-07  # pi(F) of the source-sink chain
HILL_HORIZON = 500  # relaxation horizon calibrated so |bias| < sampling error

SEED = 0
Z_MAX = 4.0


def report(num: int, name: str, passed: bool, detail: str = ""):
    status = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {num:02d} {name}: {status}  {detail}".rstrip())


def bootstrap_std_se(etas: np.ndarray, n_boot: int = 200, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, etas.size, size=(n_boot, etas.size))
    return float(etas[idx].std(axis=1, ddof=1).std(ddof=1))


@pytest.fixture(scope="module")
def short_cells(setup, model30, init150):
    """(mode, n) -> SweepResult at 2000 replicates for n in {1, 5}."""
    out = {}
    for mode in ("adaptive", "traditional", "naive"):
        for n in (1, 5):
            out[mode, n] = run_sweep_cell(
                setup, mode, n, reps=2000, seed=SEED, model=model30, init=init150
            )
    return out


@pytest.fixture(scope="module")
def sweep30(setup, model30, init150):
    """mode -> SweepResult at n = 30, 1000 replicates each."""
    return {
        mode: run_sweep_cell(
            setup, mode, 30, reps=1000, seed=SEED, model=model30, init=init150
        )
        for mode in ("adaptive", "traditional", "naive")
    }


@pytest.fixture(scope="module")
def hill_estimate(setup):
    rho = Distribution.point_mass(0, 90)
    spec = SourceSinkSpec(setup.K, frozenset(range(80, 90)), rho)

    def policy_factory(bins, model):
        return AdaptivePolicy(bins, 150.0, 1.0)

    return we_hill_mfpt(
        spec, setup.bins, policy_factory, HILL_HORIZON, 1000, RngStream(SEED), 150
    )


def test_01_unbiasedness(short_cells):
    details = []
    worst = 0.0
    for (mode, n), res in short_cells.items():
        assert res.exact == pytest.approx(EXACT_ETA0_KN_F[n], rel=1e-12)
        z = (res.mean - res.exact) / res.std_err
        worst = max(worst, abs(z))
        details.append(f"{mode}/n={n}: z={z:+.2f}")
    passed = worst <= Z_MAX
    report(1, "unbiasedness", passed, "; ".join(details))
    assert passed


def test_02_stationary_convergence(sweep30):
    res = sweep30["adaptive"]
    z = (res.mean - PI_F) / res.std_err
    passed = abs(z) <= Z_MAX
    report(
        2, "stationary convergence", passed,
        f"mean={res.mean:.4e} pi(f)={PI_F:.4e} z={z:+.2f}",
    )
    assert passed


def test_03_variance_ordering(sweep30):
    stds = {m: sweep30[m].std for m in sweep30}
    ses = {m: bootstrap_std_se(sweep30[m].etas) for m in sweep30}
    gap_at = stds["traditional"] - stds["adaptive"]
    gap_tn = stds["naive"] - stds["traditional"]
    need_at = 3 * np.hypot(ses["adaptive"], ses["traditional"])
    need_tn = 3 * np.hypot(ses["traditional"], ses["naive"])
    passed = gap_at > need_at and gap_tn > need_tn
    report(
        3, "variance ordering", passed,
        f"std adaptive={stds['adaptive']:.2e} traditional={stds['traditional']:.2e} "
        f"naive={stds['naive']:.2e}; gaps {gap_at:.2e}>{need_at:.2e}? "
        f"{gap_tn:.2e}>{need_tn:.2e}?",
    )
    assert passed


def test_03_supplement_ordering_with_powered_estimators(setup, init150, model30):
    """Powered version of the ordering claim.

    The estimators at n = 30 are dominated by rare heavy-weight hits of the
    observable's support, so their sample stds at 1000 matched replicates are
    far too noisy for the three-way gap test above to resolve reliably (its
    pass probability is a few percent even though the ordering is real).
    Two exact substitutions power the same conclusion:

    - the naive variance is computed in closed form (independent walkers from
      a fixed initial ensemble, variance per walker by matrix powers);
    - the adaptive and traditional variances are estimated by averaging the
      per-replicate accumulated *exact conditional* variance terms of the
      run's second-moment decomposition (the initial value is deterministic,
      so that average is an unbiased, much lower-variance estimate of the
      true estimator variance than the sample variance of the outputs).
    """
    n = 30
    # exact naive std: independent walkers from the fixed initial ensemble
    Kn = np.linalg.matrix_power(setup.K.matrix, n)
    mean_per_state = Kn @ setup.f.values
    var_per_state = Kn @ (setup.f.values**2) - mean_per_state**2
    naive_std = float(
        np.sqrt((init150.weights**2 * var_per_state[init150.states]).sum())
    )

    gseq = g_sequence(setup.K, setup.f, n)
    v = compute_v(model30.P, model30.u, n)
    cum = setup.K.row_cumsums()

    def accumulated_variance(mode: str, reps: int) -> tuple[float, float]:
        policy = make_policy(mode, setup.bins, 150)
        acc = np.empty(reps)
        for rep in range(reps):
            rec = run_we(
                setup.K, setup.f, policy, init150, n,
                RngStream(SEED + 1).for_replicate(rep),
                v_table=v, record_history=True, row_cumsums=cum,
            )
            mut, sel = doob_terms(rec, gseq)
            acc[rep] = mut.sum() + sel.sum()
        mean = float(acc.mean())
        se = float(acc.std(ddof=1) / np.sqrt(reps))
        return np.sqrt(mean), se / (2 * np.sqrt(mean))  # delta method

    adapt_std, se_a = accumulated_variance("adaptive", 1000)
    trad_std, se_t = accumulated_variance("traditional", 3000)
    print(
        f"\nstd estimates: adaptive={adapt_std:.3e} (se {se_a:.1e}) < "
        f"traditional={trad_std:.3e} (se {se_t:.1e}) < exact naive={naive_std:.3e}"
    )
    assert adapt_std + 3 * se_a < trad_std - 3 * se_t
    assert trad_std + 3 * se_t < naive_std


def test_04_doob_identity(setup, model30, init150):
    policy = AdaptivePolicy(setup.bins, 150.0, 1.0)
    v5 = compute_v(model30.P, model30.u, 5)
    rep = check_doob_identity(
        setup.K, setup.f, policy, init150, 5, 5000, RngStream(SEED), v_table=v5
    )
    report(
        4, "second-moment identity", rep.passed,
        f"E[M_n^2]={rep.value:.4e} rhs={rep.reference:.4e} z={rep.z:+.2f}",
    )
    assert rep.passed


def test_05_optimal_allocation_grid_search(two_state):
    f = Observable(np.array([0.0, 1.0]))
    g = g_sequence(two_state, f, 2)
    e = Ensemble(0, np.array([0, 0, 1]), np.array([0.2, 0.3, 0.5]))
    N = 3.0
    beta_opt = optimal_allocation(e, g, 0, N)
    best = conditional_mutation_variance(e, beta_opt, g, 0)
    # brute force over the simplex sum(beta) = 3 with grid step 0.01
    step = 0.01
    b1 = np.arange(step, N, step)
    b2 = np.arange(step, N, step)
    B1, B2 = np.meshgrid(b1, b2, indexing="ij")
    B3 = N - B1 - B2
    ok = B3 >= step / 2
    terms = e.weights**2 * g.local_var[0][e.states]
    grid = np.where(
        ok, terms[0] / B1 + terms[1] / B2 + terms[2] / np.maximum(B3, step / 2),
        np.inf,
    )
    margin = best - grid.min()
    passed = margin <= 1e-10
    report(
        5, "allocation optimality", passed,
        f"formula={best:.10e} grid min={grid.min():.10e}",
    )
    assert passed


def test_06_variance_proxy_nonnegativity(model30):
    # recompute the proxy table without clamping to observe raw roundoff
    P, u, n = model30.P.matrix, model30.u, 30
    w = [u]
    for _ in range(n):
        w.append(P @ w[-1])
    raw_min = min(
        float((P @ (w[n - p - 1] ** 2) - w[n - p] ** 2).min()) for p in range(n)
    )
    passed = raw_min >= -1e-10 and model30.v.min() >= 0.0
    report(6, "proxy nonnegativity", passed, f"pre-clamp min={raw_min:.2e}")
    assert passed


def test_07_hill_relation(two_state, hill_estimate):
    # two-state spec: both exact routes give mean first-passage time 10
    rho2 = Distribution.point_mass(0, 2)
    pi2 = stationary(source_sink_kernel(SourceSinkSpec(two_state, frozenset({1}), rho2)))
    hill2 = general_hill_average(pi2, Observable(np.ones(2)), {1})
    direct2 = direct_mfpt(two_state, rho2, [1])
    exact_ok = abs(hill2 - 10.0) <= 1e-10 and abs(direct2 - 10.0) <= 1e-10

    # three-state symmetric spec: hitting probability is exactly 1/2
    K3 = TransitionMatrix(
        np.array([[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]])
    )
    rho3 = Distribution.point_mass(1, 3)
    pi3 = stationary(source_sink_kernel(SourceSinkSpec(K3, frozenset({0, 2}), rho3)))
    hit_ok = abs(hitting_probability(pi3, [0], [2]) - 0.5) <= 1e-10

    # three-well spec: replicate mean of eta_n(1_F) against the exact pi(F)
    est = hill_estimate
    z = (est.eta_mean - PI_SINK) / est.eta_se
    we_ok = abs(z) <= Z_MAX
    passed = exact_ok and hit_ok and we_ok
    report(
        7, "first-passage identities", passed,
        f"mfpt(2-state)={direct2:.12f}; WE z={z:+.2f} "
        f"mfpt={est.mfpt:.3e} oracle={MFPT_ORACLE:.3e}",
    )
    assert passed


def test_08_degeneracies(setup, init150):
    # (a) naive mode is bit-identical to plain independent chain simulation
    n = 10
    stream = RngStream(SEED, replicate=0)
    rec = run_we(setup.K, setup.f, NaivePolicy(), init150, n, stream)
    cum = setup.K.row_cumsums()
    states = init150.states.copy()
    etas = [float(init150.weights @ setup.f.values[states])]
    for p in range(n):
        u = stream.at(p, "mutate").random(states.size)
        states = (u[:, None] >= cum[states]).sum(axis=1)
        etas.append(float(init150.weights @ setup.f.values[states]))
    naive_ok = np.array_equal(rec.final.states, states) and np.array_equal(
        rec.eta_f, np.array(etas)
    )

    # (b) f constant: both conditional variance terms vanish every generation
    # (all mean children counts are the integer 1 under the naive policy)
    ones = Observable(np.ones(90))
    g = g_sequence(setup.K, ones, n)
    rec1 = run_we(
        setup.K, ones, NaivePolicy(), init150, n, RngStream(SEED),
        record_history=True,
    )
    # the selection term is exactly zero (integer mean children counts); the
    # mutation term is zero up to the 1e-12 row-sum roundoff of K applied to
    # the constant vector, squared weights included
    mut, sel = doob_terms(rec1, g)
    const_ok = bool(np.all(mut <= 1e-15) and np.all(sel == 0.0))
    assert g.local_var.max() <= 1e-15

    # (c) stochastic rounding at integer means is deterministic
    rng = np.random.default_rng(1)
    round_ok = all(
        stochastic_round(float(b), rng) == b for b in (0, 1, 2, 7) for _ in range(200)
    )
    passed = naive_ok and const_ok and round_ok
    report(
        8, "degeneracy checks", passed,
        f"naive bit-identical={naive_ok} constant-f terms zero={const_ok} "
        f"integer rounding deterministic={round_ok}",
    )
    assert passed


def test_09_no_extinction(short_cells, sweep30, hill_estimate):
    total = sum(res.extinct_count for res in short_cells.values())
    total += sum(res.extinct_count for res in sweep30.values())
    total += hill_estimate.extinct_replicates
    runs = 2000 * 6 + 1000 * 3 + 1000
    passed = total == 0
    report(9, "no extinction", passed, f"{total} extinct of {runs} runs")
    assert passed


def test_10_determinism(tmp_path):
    cfg = tmp_path / "config"
    cfg.write_text("mode = adaptive\nhorizons = 30\nreps = 1000\nseed = 0\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["run", "--config", str(cfg), "--out", str(b)]) == 0
    mismatched = [
        p.name for p in sorted(a.iterdir())
        if p.read_bytes() != (b / p.name).read_bytes()
    ]
    passed = not mismatched
    report(10, "byte-identical reruns", passed, f"mismatched files: {mismatched}")
    assert passed
