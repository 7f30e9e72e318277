"""Command-line front end.

Subcommands: coarse, run, diagnose, hill. Exit codes: 0 success, 1 config
error, 2 numerical failure, 3 diagnostic check failure. All CSVs carry a
header row and a leading comment recording the config hash.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .coarse import build_coarse_mc, build_coarse_model, compute_v, coarse_stationary, kernel_step_sampler
from .config import ExperimentConfig, parse_state_set
from .diagnostics import check_doob_identity, check_unbiasedness
from .engine import RngStream, stationary_init_ensemble
from .experiment import make_policy, run_sweep_cell, stationary_reference
from .hill import SourceSinkSpec, direct_mfpt, source_sink_kernel, we_hill_hitting, we_hill_mfpt
from .markov import ConvergenceError, Distribution, second_eigenvalue_modulus, stationary
from .serialize import (
    config_hash,
    write_matrix_csv,
    write_rows,
    write_v_table_csv,
    write_vector_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_CHECK_FAILED = 3

ORACLE_SIZE_LIMIT = 10**4


def _common_flags(sub: argparse.ArgumentParser):
    sub.add_argument("--config", type=Path, default=None, help="key=value config file")
    sub.add_argument("--seed", type=int, default=None, help="RNG seed (64-bit)")
    sub.add_argument("--out", type=str, default=None, help="output directory")
    sub.add_argument("--reps", type=int, default=None, help="replicate count")
    sub.add_argument("--threads", type=int, default=None, help="worker processes")
    sub.add_argument("--mode", type=str, default=None,
                     help="adaptive | traditional | naive | all")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="we-sample",
        description="Weighted-ensemble resampling for finite-state Markov chains.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("coarse", "build the coarse model and write P/u/mu/v CSVs"),
        ("run", "run the replicate sweep over modes and horizons"),
        ("diagnose", "unbiasedness and Doob-identity checks"),
        ("hill", "source-sink MFPT and hitting-probability estimates"),
    ):
        sub = subs.add_parser(name, help=doc)
        _common_flags(sub)
    return parser


def _load_config(args) -> ExperimentConfig:
    return ExperimentConfig.from_file(
        args.config,
        seed=args.seed,
        out=args.out,
        reps=args.reps,
        threads=args.threads,
        mode=args.mode,
    )


def cmd_coarse(cfg: ExperimentConfig) -> int:
    setup = cfg.build_setup()
    out = Path(cfg.out)
    h = config_hash(cfg.canonical_text())
    horizon = max(cfg.horizons)
    if cfg.coarse_samples > 0:
        rng = RngStream(cfg.seed).at(0, "coarse")
        P, u = build_coarse_mc(
            kernel_step_sampler(setup.K), setup.bins, setup.zeta, setup.f,
            cfg.coarse_samples, rng,
        )
        mu = coarse_stationary(P)
        v = compute_v(P, u, horizon)
    else:
        model = build_coarse_model(setup.K, setup.bins, setup.zeta, setup.f, horizon)
        P, u, mu, v = model.P, model.u, model.mu, model.v
    write_matrix_csv(out / "P.csv", P, h)
    write_vector_csv(out / "u.csv", u, h)
    write_vector_csv(out / "mu.csv", mu.weights, h)
    write_v_table_csv(out / "v.csv", v, h)
    lam2 = second_eigenvalue_modulus(P)
    print(f"coarse model written to {out} (R={P.n_states}, lambda_2={lam2:.6f})")
    return EXIT_OK


def cmd_run(cfg: ExperimentConfig) -> int:
    setup = cfg.build_setup()
    out = Path(cfg.out)
    h = config_hash(cfg.canonical_text())
    model = build_coarse_model(setup.K, setup.bins, setup.zeta, setup.f,
                               horizon=max(cfg.horizons) or 1)
    init = stationary_init_ensemble(model.mu, setup.bins, cfg.n_particles)
    pi_f = stationary_reference(setup)

    summary_rows = []
    hist_rows = []
    extinct_total = 0
    n_max = max(cfg.horizons)
    for mode in cfg.modes:
        for n in cfg.horizons:
            res = run_sweep_cell(
                setup, mode, n, cfg.reps, cfg.seed,
                n_particles=cfg.n_particles, n_floor=cfg.n_floor,
                per_bin_target=cfg.per_bin_target, model=model, init=init,
                threads=cfg.threads, keep_traces=True,
            )
            extinct_total += res.extinct_count
            summary_rows.append((
                mode, n, cfg.reps, res.mean, res.std, res.std_err,
                res.exact, pi_f, res.extinct_count,
            ))
            run_rows = (
                (rep, p, res.traces[rep, p], res.weight_traces[rep, p],
                 res.count_traces[rep, p], bool(res.extinct_flags[rep]))
                for rep in range(cfg.reps)
                for p in range(n + 1)
            )
            write_rows(out / f"runs_{mode}_n{n}.csv",
                       ("replicate", "p", "eta_f", "total_weight",
                        "num_particles", "extinct"), run_rows, h)
            if n == n_max:
                for i in range(setup.K.n_states):
                    hist_rows.append((mode, i + 1, res.hist_counts[i],
                                      res.hist_weights[i]))
            if res.extinct_count > 0.01 * cfg.reps:
                print(f"warning: {res.extinct_count}/{cfg.reps} replicates went "
                      f"extinct in mode={mode}, n={n}", file=sys.stderr)
    write_rows(out / "summary.csv",
               ("mode", "n", "reps", "mean", "std", "std_err", "exact",
                "stationary", "extinct_count"),
               summary_rows, h)
    write_rows(out / "histograms.csv",
               ("mode", "i", "count_fraction", "weight_fraction"), hist_rows, h)
    # v tables at p = 0 and p = n_max - 1 (the figure-3 style snapshot)
    v = compute_v(model.P, model.u, n_max) if n_max >= 1 else np.zeros((1, model.n_bins))
    snap_rows = [(p, r + 1, v[p, r])
                 for p in ((0, n_max - 1) if n_max >= 1 else (0,))
                 for r in range(v.shape[1])]
    write_rows(out / "v_snapshot.csv", ("p", "r", "value"), snap_rows, h)
    write_rows(out / "extinctions.csv", ("total_extinct_replicates",),
               [(extinct_total,)], h)
    print(f"run results written to {out}")
    return EXIT_OK


def cmd_diagnose(cfg: ExperimentConfig) -> int:
    setup = cfg.build_setup()
    out = Path(cfg.out)
    h = config_hash(cfg.canonical_text())
    n = cfg.diag_horizon
    model = build_coarse_model(setup.K, setup.bins, setup.zeta, setup.f,
                               horizon=max(n, 1))
    init = stationary_init_ensemble(model.mu, setup.bins, cfg.n_particles)
    rows = []
    all_passed = True
    for mode in cfg.modes:
        policy = make_policy(mode, setup.bins, cfg.n_particles,
                             cfg.n_floor, cfg.per_bin_target)
        for check in (check_unbiasedness, check_doob_identity):
            report = check(setup.K, setup.f, policy, init, n, cfg.diag_reps,
                           RngStream(cfg.seed), v_table=model.v)
            rows.append((report.check, report.n, report.policy, report.value,
                         report.reference, report.std_err, report.z,
                         report.passed))
            all_passed &= report.passed
            status = "pass" if report.passed else "FAIL"
            print(f"{report.check:16s} mode={report.policy:12s} n={report.n} "
                  f"z={report.z:+.3f} [{status}]")
    write_rows(out / "diagnostics.csv",
               ("check", "n", "policy", "value", "exact_or_rhs", "std_err",
                "z", "pass"), rows, h)
    return EXIT_OK if all_passed else EXIT_CHECK_FAILED


def cmd_hill(cfg: ExperimentConfig) -> int:
    setup = cfg.build_setup()
    out = Path(cfg.out)
    h = config_hash(cfg.canonical_text())
    n_states = setup.K.n_states
    base = setup.K
    rho = Distribution.point_mass(cfg.source_state - 1, n_states)
    sink = parse_state_set(cfg.sink_states)
    spec = SourceSinkSpec(base, frozenset(sink), rho)

    def policy_factory(bins, model):
        return make_policy(cfg.modes[0], bins, cfg.n_particles,
                           cfg.n_floor, cfg.per_bin_target)

    est = we_hill_mfpt(spec, setup.bins, policy_factory, cfg.hill_horizon,
                       cfg.reps, RngStream(cfg.seed), cfg.n_particles)
    rows = []
    if n_states <= ORACLE_SIZE_LIMIT:
        oracle_mfpt = direct_mfpt(base, rho, sink)
        pi = stationary(source_sink_kernel(spec))
        oracle_pif = float(pi.weights[sink].sum())
    else:
        oracle_mfpt = float("nan")
        oracle_pif = float("nan")
    rows.append(("pi_F", est.eta_mean, oracle_pif, est.eta_se,
                 est.invalid_replicates))
    rows.append(("mfpt", est.mfpt, oracle_mfpt,
                 est.eta_se / est.eta_mean**2, est.invalid_replicates))
    if cfg.hit_a and cfg.hit_b:
        A = parse_state_set(cfg.hit_a)
        B = parse_state_set(cfg.hit_b)
        hit = we_hill_hitting(base, rho, A, B, setup.bins, policy_factory,
                              cfg.hill_horizon, cfg.reps, RngStream(cfg.seed),
                              cfg.n_particles)
        if n_states <= ORACLE_SIZE_LIMIT:
            pi_hit = stationary(source_sink_kernel(SourceSinkSpec(
                base, frozenset(A) | frozenset(B), rho)))
            from .hill import hitting_probability
            oracle_hit = hitting_probability(pi_hit, A, B)
        else:
            oracle_hit = float("nan")
        rows.append(("hitting_probability", hit.probability, oracle_hit,
                     float("nan"), hit.extinct_replicates))
    write_rows(out / "hill.csv",
               ("quantity", "estimate", "oracle", "std_err", "invalid_replicates"),
               rows, h)
    print(f"hill estimates written to {out} "
          f"(mfpt={est.mfpt:.4f}, oracle={oracle_mfpt:.4f})")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    handler = {
        "coarse": cmd_coarse,
        "run": cmd_run,
        "diagnose": cmd_diagnose,
        "hill": cmd_hill,
    }[args.command]
    try:
        return handler(cfg)
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
