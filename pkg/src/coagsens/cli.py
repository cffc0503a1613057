"""Command-line entry point.

Subcommands: ``run`` (one experiment), ``converge`` (N ladder vs the
deterministic reference), ``efficiency`` (three algorithms vs double),
``validate`` (fast invariant battery), ``oracle`` (deterministic
reference only).  Settings merge as defaults < config file < --set
overrides < dedicated flags.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness
from .config import ExperimentConfig, build_config, load_config_file

DEFAULT_OUT = "out"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH",
                        help="flat key = value settings file")
    parser.add_argument("--seed", type=lambda s: int(s, 0), metavar="U64",
                        help="base seed (decimal or 0x hex)")
    parser.add_argument("--workers", type=int, metavar="K",
                        help="worker process count")
    parser.add_argument("--out", metavar="DIR", default=DEFAULT_OUT,
                        help="output directory (default: %(default)s)")
    parser.add_argument("--set", action="append", default=[],
                        metavar="key=value", dest="overrides",
                        help="override any config key (repeatable)")


def _config_from_args(args) -> ExperimentConfig:
    layers = []
    if args.config:
        layers.append(load_config_file(args.config))
    pairs = {}
    for item in args.overrides:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    layers.append(pairs)
    flags = {}
    if args.seed is not None:
        flags["seed"] = str(args.seed)
    if args.workers is not None:
        flags["workers"] = str(args.workers)
    layers.append(flags)
    return build_config(*layers)


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    result = harness.run_experiment(cfg, out_dir=args.out)
    print(f"wrote {os.path.join(args.out, 'sensitivity.csv')} and "
          f"events.csv ({cfg.replicates} replicates, "
          f"t_run={result.t_run:.3f} s"
          + (f", {result.extinct_count} early-stopped" if
             result.extinct_count else "") + ")")
    return 0


def _cmd_converge(args) -> int:
    cfg = _config_from_args(args)
    table, slope, _ = harness.run_convergence_study(cfg, out_dir=args.out)
    for n, l_rep, c_tot, part in table:
        line = f"N={n:<8d} L={l_rep:<8d} c_tot={c_tot:.6g}"
        if part == part:
            line += f" slope_so_far={part:.4f}"
        print(line)
    print(f"log-log slope: {slope:.4f}")
    print(f"wrote {os.path.join(args.out, 'convergence.csv')}")
    return 0


def _cmd_efficiency(args) -> int:
    cfg = _config_from_args(args)
    table, _ = harness.run_efficiency_study(cfg, out_dir=args.out)
    for t, alg, tpr, var, ineff in table:
        print(f"t={t:<5g} {alg:<12s} time/run={tpr:.4g} s "
              f"total_var={var:.6g} inefficiency={ineff:.4f}")
    print(f"wrote {os.path.join(args.out, 'efficiency.csv')}")
    return 0


def _cmd_oracle(args) -> int:
    cfg = _config_from_args(args)
    ref = harness.oracle_reference(cfg)
    path = os.path.join(args.out, "sensitivity.csv")
    os.makedirs(args.out, exist_ok=True)
    harness.write_oracle_csv(path, cfg, ref)
    print(f"wrote {path} (source=oracle, {len(cfg.output_times)} times x "
          f"{cfg.x_report}+1 sizes)")
    return 0


# ---------------------------------------------------------------------------
# validate: fast invariant battery


def _check_rng() -> None:
    from . import _engine
    from .seeding import Xoshiro256
    for seed in (1, 2**63 + 11, 987654321):
        state = np.zeros(4, dtype=np.uint64)
        _engine.rng_seed(np.uint64(seed), state)
        ref = Xoshiro256(seed)
        for _ in range(200):
            if int(_engine.rng_next(state)) != ref.next_word():
                raise AssertionError(f"RNG mismatch for seed {seed}")


def _check_rate_tables() -> None:
    from .ensemble import CoupledState, Label
    from .kernels import build_majorant, kernel_pair
    from .simulate import effective_rates_double, effective_rates_single

    rng = np.random.default_rng(2024)
    for family, lam, eps in (("additive", 1.0, 0.06), ("soot", 2.1, 0.03)):
        kp, km = kernel_pair(family, lam, eps)
        maj = build_majorant(family, lam, eps)
        for trial in range(10):
            parts = [(int(rng.integers(1, 7)), Label(int(rng.integers(3))))
                     for _ in range(int(rng.integers(3, 8)))]
            st = CoupledState.from_particles(maj, float(len(parts)), parts)
            for rates in (effective_rates_single(st, kp, km),
                          effective_rates_double(st, kp, km)):
                _assert_pair_marginals(st, kp, km, rates)


def _assert_pair_marginals(state, kp, km, rates) -> None:
    from .ensemble import Label
    n = state.n_scale
    commons = state.live_slots(Label.COMMON)
    pluses = state.live_slots(Label.PLUS)
    minuses = state.live_slots(Label.MINUS)
    for j in pluses:
        x = int(state.mass[0, j])
        for i in commons:
            y = int(state.mass[1, i])
            want = kp.rate(x, y) / n
            got = rates.get(("2b", (j, i)), 0.0) + sum(
                rates.get(("2a", (j, i, k)), 0.0)
                + rates.get(("2b", (j, i, k)), 0.0) for k in minuses)
            if abs(got - want) > 1e-12 * max(1.0, want):
                raise AssertionError(f"plus marginal off: {got} vs {want}")
    for k in minuses:
        z = int(state.mass[2, k])
        for i in commons:
            y = int(state.mass[1, i])
            want = km.rate(y, z) / n
            got = rates.get(("2c", (k, i)), 0.0) + sum(
                rates.get(("2a", (j, i, k)), 0.0)
                + rates.get(("2c", (j, i, k)), 0.0) for j in pluses)
            if abs(got - want) > 1e-12 * max(1.0, want):
                raise AssertionError(f"minus marginal off: {got} vs {want}")


def _check_conservation() -> None:
    from .config import ExperimentConfig
    from .ensemble import CoupledState
    from .kernels import build_majorant
    from .seeding import derive_seed
    from . import _engine

    for family in ("additive", "soot"):
        for algorithm in ("single", "double"):
            cfg = ExperimentConfig(kernel=family, n_particles=400,
                                   algorithm=algorithm, t_end=1.0,
                                   output_times=(1.0,), base_seed=5)
            maj = build_majorant(family, cfg.resolved_lam, cfg.resolved_eps)
            st = CoupledState.monodisperse(400, maj)
            _engine.rng_seed(np.uint64(derive_seed(5, 0)), st.rng)
            _engine.advance(*st._core(), *st._tables(),
                            0 if family == "additive" else 1,
                            cfg.resolved_lam + cfg.resolved_eps / 2,
                            cfg.resolved_lam - cfg.resolved_eps / 2,
                            st.n_scale, 0 if algorithm == "single" else 1,
                            0, 1.0, 1 << 62, st.regs, st.iregs, st.counters,
                            st.rng)
            if st.system_mass("+") != 400 or st.system_mass("-") != 400:
                raise AssertionError(f"mass drift: {family}/{algorithm}")
            st.validate()


def _check_degeneracy() -> None:
    from .config import ExperimentConfig
    from .simulate import run_trajectory

    for algorithm in ("single", "double"):
        cfg = ExperimentConfig(kernel="additive", eps=0.0, n_particles=300,
                               algorithm=algorithm, t_end=2.0,
                               output_times=(1.0, 2.0), base_seed=9)
        rec = run_trajectory(cfg, 9)
        for k in range(2):
            if rec.plus[k].counts != rec.minus[k].counts:
                raise AssertionError(f"eps=0 systems diverged ({algorithm})")
            if rec.event_counts[k, 1:6].sum() != 0:
                raise AssertionError("eps=0 produced one-sided events")


def _check_oracle() -> None:
    from . import oracle
    from .kernels import KernelSpec, build_majorant, kernel_pair

    k1 = KernelSpec(family="additive", lam=1.0)
    d0 = oracle._make_smol_rhs(k1, 32)(oracle.monodisperse(32))
    if abs(d0[1] + 2.0) > 1e-13:
        raise AssertionError("monodisperse initial slope wrong")
    kp, km = kernel_pair("additive", 1.0, 0.06)
    maj = build_majorant("additive", 1.0, 0.06)
    c, p, m = oracle.integrate_coupled_limit(
        kp, km, maj, oracle.monodisperse_triple(96), [1.0], x_max=96, h=5e-3)
    plus = oracle.integrate_smoluchowski(kp, {1: 1.0}, [1.0], 96, h=5e-3)
    minus = oracle.integrate_smoluchowski(km, {1: 1.0}, [1.0], 96, h=5e-3)
    if np.max(np.abs(c + p - plus)) > 1e-8:
        raise AssertionError("plus marginal identity broken")
    if np.max(np.abs(c + m - minus)) > 1e-8:
        raise AssertionError("minus marginal identity broken")


def _check_estimator() -> None:
    from .config import ExperimentConfig
    from .simulate import run_trajectory
    from .stats import estimate

    cfg = ExperimentConfig(kernel="additive", n_particles=200,
                           algorithm="double", t_end=1.0,
                           output_times=(1.0,), x_report=256, base_seed=3)
    rec = run_trajectory(cfg, 3)
    est = estimate(rec.plus[0], rec.minus[0], cfg.resolved_eps, x_report=256)
    mass_sens = float(np.arange(257)[1:] @ est.values[1:])
    if est.values[0] != 0.0:
        raise AssertionError("unexpected overflow at x_report=256, N=200")
    if abs(mass_sens) > 1e-9:
        raise AssertionError(f"mass-weighted sensitivity {mass_sens} != 0")


_CHECKS = (
    ("rng-reference", _check_rng),
    ("pair-rate-marginals", _check_rate_tables),
    ("mass-conservation", _check_conservation),
    ("eps-zero-degeneracy", _check_degeneracy),
    ("oracle-identities", _check_oracle),
    ("estimator-mass-identity", _check_estimator),
)


def _cmd_validate(args) -> int:
    failed = 0
    for name, check in _CHECKS:
        try:
            check()
        except Exception as exc:
            failed += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"ok   {name}")
    if failed:
        print(f"{failed} of {len(_CHECKS)} invariant checks failed")
        return 1
    print(f"all {len(_CHECKS)} invariant checks passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="coagsens",
        description="Sensitivity estimation for pairwise-merge particle "
                    "systems via coupled stochastic simulation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_text in (
            ("run", _cmd_run, "run one experiment and write CSVs"),
            ("converge", _cmd_converge, "N ladder vs deterministic reference"),
            ("efficiency", _cmd_efficiency, "algorithm comparison vs double"),
            ("validate", _cmd_validate, "run the fast invariant battery"),
            ("oracle", _cmd_oracle, "deterministic reference only")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.set_defaults(func=func)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
