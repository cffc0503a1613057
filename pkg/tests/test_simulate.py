"""Trajectory drivers and the exact accepted-rate tables."""

import math

import numpy as np
import pytest

from coagsens import _engine, kernels, simulate, stats
from coagsens.config import ExperimentConfig
from coagsens.ensemble import EVENT_NAMES, CoupledState, Label
from coagsens.kernels import build_majorant, kernel_pair

KP, KM = kernel_pair("additive", 1.0, 0.06)
ADD = build_majorant("additive", 1.0, 0.06)
SP, SM = kernel_pair("soot", 2.1, 0.03)
SOOT = build_majorant("soot", 2.1, 0.03)


@pytest.fixture(scope="module", autouse=True)
def _warm(engine):
    return engine


def worked_state(n_scale=1.0):
    return CoupledState.from_particles(
        ADD, n_scale, [(1, Label.PLUS), (1, Label.COMMON),
                       (1, Label.MINUS)])


# ---------------------------------------------------------------------------
# rate tables


def test_tether_sums_worked_state():
    stt = worked_state()
    tp, tm = simulate.tether_sums(stt, 1)
    assert tp == pytest.approx(2.06, rel=1e-12)
    assert tm == pytest.approx(2.06, rel=1e-12)


def test_double_rate_terms_worked_triple():
    stt = worked_state()
    floor, d_plus, d_minus = simulate.double_rate_terms(stt, KP, KM, 1, 1, 1)
    assert floor == pytest.approx(1.94, rel=1e-12)
    assert d_plus == pytest.approx(0.12, rel=1e-12)
    assert d_minus == 0.0


def test_double_rate_terms_degenerate_when_rates_match():
    kp0, km0 = kernel_pair("additive", 1.0, 0.0)
    stt = CoupledState.from_particles(
        build_majorant("additive", 1.0, 0.0), 1.0,
        [(1, Label.PLUS), (1, Label.COMMON), (1, Label.MINUS)])
    floor, d_plus, d_minus = simulate.double_rate_terms(stt, kp0, km0,
                                                        1, 1, 1)
    assert d_plus == 0.0
    assert d_minus == 0.0
    assert floor == pytest.approx(2.0, rel=1e-12)


def test_effective_rates_single_two_common():
    stt = CoupledState.monodisperse(2, ADD)
    rates = simulate.effective_rates_single(stt, KP, KM)
    assert rates[("1a", (0, 1))] == pytest.approx(1.94 / 2, rel=1e-12)
    assert rates[("1b", (0, 1))] == pytest.approx(0.12 / 2, rel=1e-12)
    assert rates[("1c", (0, 1))] == 0.0


def test_effective_rates_single_soot_flips_excess_side():
    # soot rates shrink with the parameter once masses differ from 1,
    # so the excess channel demotes toward the minus side
    stt = CoupledState.from_particles(
        SOOT, 2.0, [(1, Label.COMMON), (2, Label.COMMON)])
    rates = simulate.effective_rates_single(stt, SP, SM)
    kp, km = SP.rate(1, 2), SM.rate(1, 2)
    assert km > kp
    assert rates[("1a", (0, 1))] == pytest.approx(kp / 2, rel=1e-12)
    assert rates[("1b", (0, 1))] == 0.0
    assert rates[("1c", (0, 1))] == pytest.approx((km - kp) / 2, rel=1e-12)


def test_effective_rates_double_worked_state():
    stt = worked_state()
    rates = simulate.effective_rates_double(stt, KP, KM)
    assert rates[("2a", (0, 0, 0))] == pytest.approx(1.94, rel=1e-12)
    assert rates[("2b", (0, 0, 0))] == pytest.approx(0.12, rel=1e-12)
    assert rates[("2c", (0, 0, 0))] == 0.0
    # marginal of the triple channel: the plain one-sided kernels
    plus_total = rates[("2a", (0, 0, 0))] + rates[("2b", (0, 0, 0))]
    assert plus_total == pytest.approx(KP.rate(1, 1), rel=1e-12)
    minus_total = rates[("2a", (0, 0, 0))] + rates[("2c", (0, 0, 0))]
    assert minus_total == pytest.approx(KM.rate(1, 1), rel=1e-12)


def test_effective_rates_double_degenerates_without_minus():
    stt = CoupledState.from_particles(
        ADD, 2.0, [(1, Label.PLUS), (1, Label.COMMON)])
    single = simulate.effective_rates_single(stt, KP, KM)
    double = simulate.effective_rates_double(stt, KP, KM)
    assert double == single
    assert double[("2b", (0, 0))] == pytest.approx(
        KP.rate(1, 1) / 2, rel=1e-12)


def _plus_marginal(rates, state):
    """Summed accepted rate of +-system merges per unordered mass pair."""
    out: dict = {}

    def mass(label, slot):
        return int(state.mass[int(label), slot])

    for (name, slots), rate in rates.items():
        if rate == 0.0:
            continue
        if name in ("1a", "1b"):
            key = (mass(Label.COMMON, slots[0]), mass(Label.COMMON, slots[1]))
        elif name == "2a" and len(slots) == 3:
            key = (mass(Label.PLUS, slots[0]), mass(Label.COMMON, slots[1]))
        elif name == "2b":
            key = (mass(Label.PLUS, slots[0]), mass(Label.COMMON, slots[1]))
        elif name == "3a":
            key = (mass(Label.PLUS, slots[0]), mass(Label.PLUS, slots[1]))
        else:
            continue
        key = (min(key), max(key))
        out[key] = out.get(key, 0.0) + rate
    return out


def test_marginal_rate_identity_small_state():
    # every +-system pair coagulates at exactly K+(a, b)/N in both
    # coupled variants; this is the per-pair restatement checked in bulk
    # by the first acceptance criterion
    parts = [(1, Label.PLUS), (2, Label.COMMON), (2, Label.COMMON),
             (3, Label.MINUS), (5, Label.MINUS)]
    stt = CoupledState.from_particles(ADD, 5.0, parts)
    plus_masses = [1, 2, 2]
    want: dict = {}
    for a in range(len(plus_masses)):
        for b in range(a + 1, len(plus_masses)):
            key = (min(plus_masses[a], plus_masses[b]),
                   max(plus_masses[a], plus_masses[b]))
            want[key] = want.get(key, 0.0) + KP.rate(*key) / 5.0
    for table in (simulate.effective_rates_single(stt, KP, KM),
                  simulate.effective_rates_double(stt, KP, KM)):
        got = _plus_marginal(table, stt)
        assert set(got) == set(want)
        for key in want:
            assert got[key] == pytest.approx(want[key], rel=1e-12)


# ---------------------------------------------------------------------------
# stepping


def test_step_returns_event_names_and_advances_clock():
    stt = CoupledState.monodisperse(128, ADD)
    _engine.rng_seed(np.uint64(11), stt.rng)
    t_prev = 0.0
    for _ in range(64):
        name, dt = simulate.step_double(stt, KP, KM)
        assert name in EVENT_NAMES
        assert dt > 0.0
        assert stt.t == pytest.approx(t_prev + dt)
        t_prev = stt.t
    assert stt.system_mass("+") == 128
    assert stt.system_mass("-") == 128
    stt.validate()


def test_step_event_algebra_matches_measure_updates():
    # each accepted event must move the two measures exactly like one
    # coagulation in the corresponding system(s); fictitious moves none
    plus_merge = {"1a", "1b", "2a", "2b", "3a"}
    minus_merge = {"1a", "1c", "2a", "2c", "3b"}
    for stepper, kp, km, maj in ((simulate.step_single, KP, KM, ADD),
                                 (simulate.step_double, SP, SM, SOOT)):
        stt = CoupledState.monodisperse(96, maj)
        _engine.rng_seed(np.uint64(3), stt.rng)
        for _ in range(150):
            n_plus = stt.system_count("+")
            n_minus = stt.system_count("-")
            if min(n_plus, n_minus) <= 1:
                break
            name, _ = stepper(stt, kp, km)
            d_plus = n_plus - stt.system_count("+")
            d_minus = n_minus - stt.system_count("-")
            assert d_plus == (1 if name in plus_merge else 0), name
            assert d_minus == (1 if name in minus_merge else 0), name
            assert stt.system_mass("+") == 96
            assert stt.system_mass("-") == 96
        stt.validate()


def test_step_rejects_exhausted_state():
    stt = CoupledState.from_particles(ADD, 2.0, [(2, Label.COMMON)])
    with pytest.raises(RuntimeError):
        simulate.step_single(stt, KP, KM)


def test_two_particle_waiting_time_distribution():
    # N=2 unit masses: accepted events arrive at rate khat(1,1)/N and
    # every accepted event coagulates the + system (additive majorant
    # equals the + kernel), so the first merge time is exponential
    rate = ADD.value(1, 1) / 2.0
    samples = []
    for rep in range(10_000):
        stt = CoupledState.monodisperse(2, ADD)
        _engine.rng_seed(np.uint64(900_000 + rep), stt.rng)
        while True:
            name, _ = simulate.step_single(stt, KP, KM)
            if name != "fictitious":
                break
        samples.append(stt.t)
    xs = np.sort(samples)
    cdf = 1.0 - np.exp(-rate * xs)
    n = len(xs)
    emp_hi = np.arange(1, n + 1) / n
    emp_lo = np.arange(0, n) / n
    d_stat = max(np.max(np.abs(emp_hi - cdf)), np.max(np.abs(cdf - emp_lo)))
    # 1% asymptotic Kolmogorov-Smirnov critical value
    assert d_stat <= 1.6276 / math.sqrt(n)


# ---------------------------------------------------------------------------
# trajectories


def _zero_eps_config(**kw):
    base = dict(kernel="additive", eps=0.0, n_particles=256,
                algorithm="single", t_end=2.0, output_times=(1.0, 2.0),
                x_report=16)
    base.update(kw)
    return ExperimentConfig(**base)


def test_trajectory_eps_zero_keeps_systems_identical():
    for algorithm in ("single", "double"):
        for fam in ("additive", "soot"):
            rec = simulate.run_trajectory(
                _zero_eps_config(kernel=fam, algorithm=algorithm), seed=5)
            assert not rec.label_counts[:, 0].any()
            assert not rec.label_counts[:, 2].any()
            for sp, sm in zip(rec.plus, rec.minus):
                assert sp.counts == sm.counts
                est = stats.estimate(sp, sm, eps=0.5, x_report=16)
                assert not est.values.any()


def test_trajectory_is_deterministic_in_seed():
    cfg = ExperimentConfig(kernel="soot", n_particles=200, algorithm="double",
                           t_end=1.0, output_times=(0.5, 1.0))
    a = simulate.run_trajectory(cfg, seed=77)
    b = simulate.run_trajectory(cfg, seed=77)
    c = simulate.run_trajectory(cfg, seed=78)
    for x, y in zip(a.plus + a.minus, b.plus + b.minus):
        assert x.counts == y.counts
    assert np.array_equal(a.event_counts, b.event_counts)
    assert any(x.counts != y.counts
               for x, y in zip(a.plus, c.plus))


def test_trajectory_time_zero_snapshot_is_initial_condition():
    cfg = ExperimentConfig(n_particles=64, algorithm="double", t_end=1.0,
                           output_times=(0.0, 1.0))
    rec = simulate.run_trajectory(cfg, seed=1)
    assert rec.plus[0].counts == {1: 64}
    assert rec.minus[0].counts == {1: 64}
    assert rec.plus[1].counts != {1: 64}


def test_trajectory_records_extinction():
    cfg = ExperimentConfig(n_particles=2, algorithm="double", t_end=3.0,
                           output_times=(3.0,))
    seen_extinct = False
    for seed in range(8):
        rec = simulate.run_trajectory(cfg, seed=seed)
        if rec.extinct:
            seen_extinct = True
            assert rec.plus[0].total_number() == 1
    assert seen_extinct


def test_trajectory_event_counts_are_cumulative():
    cfg = ExperimentConfig(n_particles=512, algorithm="double", t_end=1.0,
                           output_times=(0.25, 0.5, 1.0))
    rec = simulate.run_trajectory(cfg, seed=9)
    totals = rec.event_counts.sum(axis=1)
    assert totals[0] <= totals[1] <= totals[2]
    assert rec.elapsed[0] <= rec.elapsed[1] <= rec.elapsed[2]
    assert rec.elapsed_total == rec.elapsed[-1]


def test_independent_trajectory_runs_two_streams():
    cfg = ExperimentConfig(n_particles=256, algorithm="independent",
                           t_end=1.0, output_times=(1.0,), eps=0.06)
    rec = simulate.run_trajectory(cfg, seed=21)
    assert rec.plus[0].total_mass() == 256
    assert rec.minus[0].total_mass() == 256
    assert rec.plus[0].counts != rec.minus[0].counts
    assert rec.label_counts[0, 1] == 0       # nothing is shared
    assert rec.label_counts[0, 0] == rec.plus[0].total_number()
    assert rec.label_counts[0, 2] == rec.minus[0].total_number()


def test_independent_streams_not_coupled_at_eps_zero():
    # independent mode with eps=0 still runs distinct randomness, unlike
    # the coupled algorithms where eps=0 collapses the two systems
    cfg = _zero_eps_config(algorithm="independent")
    rec = simulate.run_trajectory(cfg, seed=4)
    assert rec.plus[0].counts != rec.minus[0].counts
