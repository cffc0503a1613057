"""Trajectory drivers and exact per-pair rate tables.

Three estimator variants share one compiled event loop:

* ``single``: one labeled population; the shared ⊙⊙ clock splits each
  proposal into a both-systems merge, a one-sided merge, or a rejection
  using one uniform; cross-class proposals are one-sided attempts.
* ``double``: like ``single`` but the two cross-class proposal channels
  are merged: one common particle is drawn, partners are drawn on both
  sides, and one uniform decides between the both-sided triple event,
  the larger one-sided event, or rejection.
* ``independent``: two uncoupled populations (all PLUS / all MINUS)
  driven from independently derived seeds.

``effective_rates_single``/``effective_rates_double`` enumerate, in
plain Python, the exact accepted event rates implied by the rejection
logic for every admissible slot combination.  They exist for tests:
summing them over partners must reproduce plain pairwise coagulation
rates in each marginal system.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _engine
from .config import ExperimentConfig
from .ensemble import EVENT_NAMES, CoupledState, Label, MeasureSnapshot
from .kernels import FAMILY_CODES, KernelSpec, build_majorant
from .seeding import derive_seed

__all__ = [
    "TrajectoryRecord",
    "run_trajectory",
    "step_single",
    "step_double",
    "effective_rates_single",
    "effective_rates_double",
    "double_rate_terms",
    "tether_sums",
    "ensure_compiled",
]

_MASK64 = (1 << 64) - 1
_NO_LIMIT = 1 << 62

ST_REACHED = _engine.ST_REACHED
ST_FROZEN = _engine.ST_FROZEN
ST_EXTINCT = _engine.ST_EXTINCT


@dataclass(frozen=True)
class TrajectoryRecord:
    """Everything one replicate reports back to the harness."""

    algorithm: str
    n_scale: float
    output_times: tuple[float, ...]
    plus: list[MeasureSnapshot]
    minus: list[MeasureSnapshot]
    label_counts: np.ndarray      # [times, 3] live (plus, common, minus)
    event_counts: np.ndarray      # [times, 9] cumulative event tallies
    elapsed: np.ndarray           # [times] cumulative simulation seconds
    elapsed_total: float
    extinct: bool                 # some system hit <= 1 particle early


def _advance(state: CoupledState, family_code: int, lam_p: float,
             lam_m: float, algo_code: int, watch: int, t_stop: float,
             max_events: int = _NO_LIMIT) -> int:
    return _engine.advance(
        *state._core(), *state._tables(), family_code, lam_p, lam_m,
        state.n_scale, algo_code, watch, float(t_stop), max_events,
        state.regs, state.iregs, state.counters, state.rng)


def run_trajectory(config: ExperimentConfig, seed: int) -> TrajectoryRecord:
    """Simulate one replicate and record snapshots at the output times."""
    family = config.kernel
    lam = config.resolved_lam
    eps = config.resolved_eps
    lam_p = lam + eps / 2.0
    lam_m = lam - eps / 2.0
    fcode = FAMILY_CODES[family]
    majorant = build_majorant(family, lam, eps)
    times = config.output_times
    n = config.n_particles

    if config.algorithm in ("single", "double"):
        algo_code = 0 if config.algorithm == "single" else 1
        st = CoupledState.monodisperse(n, majorant)
        _engine.rng_seed(np.uint64(seed & _MASK64), st.rng)
        runs = [(st, 0, algo_code)]
    else:
        st_p = CoupledState.monodisperse(n, majorant, label=Label.PLUS)
        st_m = CoupledState.monodisperse(n, majorant, label=Label.MINUS)
        _engine.rng_seed(np.uint64(derive_seed(seed, 0)), st_p.rng)
        _engine.rng_seed(np.uint64(derive_seed(seed, 1)), st_m.rng)
        runs = [(st_p, 1, 0), (st_m, 2, 0)]

    n_times = len(times)
    plus_snaps: list[MeasureSnapshot] = []
    minus_snaps: list[MeasureSnapshot] = []
    label_counts = np.zeros((n_times, 3), dtype=np.int64)
    event_counts = np.zeros((n_times, 9), dtype=np.int64)
    elapsed = np.zeros(n_times, dtype=np.float64)
    wall = 0.0
    extinct = False

    for k, t_k in enumerate(times):
        for state, watch, algo_code in runs:
            t0 = time.perf_counter()
            status = _advance(state, fcode, lam_p, lam_m, algo_code, watch,
                              t_k)
            wall += time.perf_counter() - t0
            if status != ST_REACHED:
                extinct = True
        if len(runs) == 1:
            state = runs[0][0]
            plus_snaps.append(state.snapshot("+", t=t_k))
            minus_snaps.append(state.snapshot("-", t=t_k))
            cc = state.class_counts()
            label_counts[k] = (cc.plus, cc.common, cc.minus)
            event_counts[k] = state.counters
        else:
            plus_snaps.append(runs[0][0].snapshot("+", t=t_k))
            minus_snaps.append(runs[1][0].snapshot("-", t=t_k))
            label_counts[k] = (runs[0][0].n_live[0], 0, runs[1][0].n_live[2])
            event_counts[k] = runs[0][0].counters + runs[1][0].counters
        elapsed[k] = wall

    return TrajectoryRecord(
        algorithm=config.algorithm,
        n_scale=float(n),
        output_times=tuple(times),
        plus=plus_snaps,
        minus=minus_snaps,
        label_counts=label_counts,
        event_counts=event_counts,
        elapsed=elapsed,
        elapsed_total=wall,
        extinct=extinct,
    )


def _step(state: CoupledState, kplus: KernelSpec, kminus: KernelSpec,
          algo_code: int) -> tuple[str, float]:
    if state.system_count("+") < 2 and state.system_count("-") < 2:
        raise RuntimeError("fewer than 2 particles; no event possible")
    fcode = FAMILY_CODES[kplus.family]
    before = state.counters.copy()
    t_before = state.t
    status = _advance(state, fcode, kplus.lam, kminus.lam, algo_code,
                      watch=0, t_stop=np.inf, max_events=1)
    if status != _engine.ST_BUDGET:
        raise RuntimeError("no feasible event from this state")
    diff = state.counters - before
    code = int(np.nonzero(diff)[0][0])
    return EVENT_NAMES[code], state.t - t_before


def step_single(state, kplus, kminus):
    """Advance by exactly one event (possibly fictitious); returns
    (event name, waiting time)."""
    return _step(state, kplus, kminus, 0)


def step_double(state, kplus, kminus):
    return _step(state, kplus, kminus, 1)


# ---------------------------------------------------------------------------
# exact accepted-rate tables (test support, pure Python)


def tether_sums(state: CoupledState, y: int) -> tuple[float, float]:
    """Total majorant mass between one common particle of mass ``y`` and
    the PLUS class / the MINUS class (slot sums, no scale factor)."""
    tp, tm = _engine.tether_rates(float(y), state.totals, state._term_f,
                                  state._term_g, state._coef, state._expo)
    return float(tp), float(tm)


def double_rate_terms(state: CoupledState, kplus: KernelSpec,
                      kminus: KernelSpec, x: int, y: int,
                      z: int) -> tuple[float, float, float]:
    """Split the two one-sided rates of a (plus x, common y, minus z)
    triple into (both-sided floor, plus-only excess, minus-only excess).

    The floor is min(r_plus, r_minus) with r_plus the rate at which the
    (x, y) merge is proposed jointly with partner z, and symmetrically;
    summing floor+excess over the opposite class recovers the plain
    one-sided kernels exactly.
    """
    maj = state.majorant
    tp, tm = tether_sums(state, y)
    r_plus = kplus.rate(x, y) * maj.value(float(z), float(y)) / tm
    r_minus = kminus.rate(y, z) * maj.value(float(x), float(y)) / tp
    floor = min(r_plus, r_minus)
    return floor, max(r_plus - r_minus, 0.0), max(r_minus - r_plus, 0.0)


def effective_rates_single(state: CoupledState, kplus: KernelSpec,
                           kminus: KernelSpec) -> dict:
    """Accepted event rates per slot combination under single coupling.

    Keys are (event name, slot tuple); slot tuples follow EVENT_SLOTS
    order.  Common-pair and same-class keys use unordered slot pairs.
    """
    n = state.n_scale
    rates: dict = {}
    commons = state.live_slots(Label.COMMON)
    pluses = state.live_slots(Label.PLUS)
    minuses = state.live_slots(Label.MINUS)
    cmass = {i: int(state.mass[1, i]) for i in commons}
    pmass = {j: int(state.mass[0, j]) for j in pluses}
    mmass = {k: int(state.mass[2, k]) for k in minuses}
    for a, i in enumerate(commons):
        for j in commons[a + 1:]:
            kp = kplus.rate(cmass[i], cmass[j])
            km = kminus.rate(cmass[i], cmass[j])
            rates[("1a", (i, j))] = min(kp, km) / n
            rates[("1b", (i, j))] = max(kp - km, 0.0) / n
            rates[("1c", (i, j))] = max(km - kp, 0.0) / n
    for j in pluses:
        for i in commons:
            rates[("2b", (j, i))] = kplus.rate(pmass[j], cmass[i]) / n
    for k in minuses:
        for i in commons:
            rates[("2c", (k, i))] = kminus.rate(mmass[k], cmass[i]) / n
    for a, i in enumerate(pluses):
        for j in pluses[a + 1:]:
            rates[("3a", (i, j))] = kplus.rate(pmass[i], pmass[j]) / n
    for a, i in enumerate(minuses):
        for j in minuses[a + 1:]:
            rates[("3b", (i, j))] = kminus.rate(mmass[i], mmass[j]) / n
    return rates


def effective_rates_double(state: CoupledState, kplus: KernelSpec,
                           kminus: KernelSpec) -> dict:
    """Accepted event rates per slot combination under double coupling.

    Identical to single coupling except the cross-class channel: with
    both side classes populated, entries are keyed by (plus, common,
    minus) slot triples carrying the floor/excess split; with one side
    empty the channel degenerates to the one-sided pair entries.
    """
    n = state.n_scale
    rates = effective_rates_single(state, kplus, kminus)
    commons = state.live_slots(Label.COMMON)
    pluses = state.live_slots(Label.PLUS)
    minuses = state.live_slots(Label.MINUS)
    if pluses and minuses:
        # replace the one-sided channel by the merged triple channel
        for key in [k for k in rates if k[0] in ("2b", "2c")]:
            del rates[key]
        for i in commons:
            y = int(state.mass[1, i])
            for j in pluses:
                x = int(state.mass[0, j])
                for k in minuses:
                    z = int(state.mass[2, k])
                    floor, d_plus, d_minus = double_rate_terms(
                        state, kplus, kminus, x, y, z)
                    rates[("2a", (j, i, k))] = floor / n
                    rates[("2b", (j, i, k))] = d_plus / n
                    rates[("2c", (j, i, k))] = d_minus / n
    return rates


def ensure_compiled() -> None:
    """Force one pass through every jitted code path (cache warm-up)."""
    cfg = ExperimentConfig(kernel="additive", n_particles=8, replicates=1,
                           t_end=0.05, output_times=(0.05,), base_seed=1)
    for algorithm in ("single", "double", "independent"):
        run_trajectory(
            ExperimentConfig(kernel=cfg.kernel, n_particles=8,
                             algorithm=algorithm, t_end=0.05,
                             output_times=(0.05,)), seed=1)
    maj = build_majorant("additive", 1.0, 0.06)
    st = CoupledState.from_particles(
        maj, 4.0, [(1, Label.PLUS), (2, Label.COMMON), (3, Label.MINUS),
                   (3, Label.PLUS)])
    st.cleanup([3])
    tether_sums(st, 2)
    st.class_rates()
    st.sample_pair(Label.PLUS, Label.COMMON, st.rng)
