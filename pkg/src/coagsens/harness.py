"""Experiment orchestration: replicate scheduling, aggregation, and the
CSV artifacts.

Replicate l always simulates from seed mix(base_seed, l), regardless of
which worker runs it, so results are identical for any worker count.
Recorded run time covers only the simulation loop (the jitted advance
calls), never parsing or serialization; the timing column is the one
field exempt from byte-reproducibility.
"""

from __future__ import annotations

import csv
import os
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import oracle, stats
from .config import ExperimentConfig
from .ensemble import EVENT_NAMES
from .seeding import derive_seed
from .simulate import run_trajectory

__all__ = [
    "ExperimentResult",
    "run_replicates",
    "run_experiment",
    "run_convergence_study",
    "run_efficiency_study",
    "oracle_reference",
    "write_sensitivity_csv",
    "write_events_csv",
    "write_convergence_csv",
    "write_efficiency_csv",
    "read_rows",
    "SENSITIVITY_HEADER",
    "CONVERGENCE_HEADER",
    "EFFICIENCY_HEADER",
    "EVENTS_HEADER",
]

SENSITIVITY_HEADER = ("t,size,mean,var,ci_low,ci_high,algorithm,N,L,eps,"
                      "lambda,kernel,source")
CONVERGENCE_HEADER = "N,L,c_tot,slope_partial"
EFFICIENCY_HEADER = "t,algorithm,t_run_per_run_sec,total_variance,inefficiency"
EVENTS_HEADER = ("t,algorithm,count_1a,count_1b,count_1c,count_2a,count_2b,"
                 "count_2c,count_3a,count_3b,count_fictitious,n_plus,"
                 "n_common,n_minus")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    stats: list                 # one RunStats per output time
    values: np.ndarray          # (L, T, x_report + 1) replicate estimates
    event_totals: np.ndarray    # (T, 9) cumulative counts summed over runs
    label_means: np.ndarray     # (T, 3) mean live (plus, common, minus)
    elapsed_by_time: np.ndarray  # (T,) simulation seconds summed over runs
    t_run: float                # total simulation seconds
    extinct_count: int


def _replicate_rows(config: ExperimentConfig, replicates) -> tuple:
    """Simulate a block of replicate indices; return stacked arrays."""
    eps = config.resolved_eps
    n_t = len(config.output_times)
    width = config.x_report + 1
    vals = np.zeros((len(replicates), n_t, width), dtype=np.float64)
    elapsed = np.zeros((len(replicates), n_t), dtype=np.float64)
    events = np.zeros((len(replicates), n_t, 9), dtype=np.int64)
    labels = np.zeros((len(replicates), n_t, 3), dtype=np.int64)
    extinct = 0
    for row, l in enumerate(replicates):
        rec = run_trajectory(config, derive_seed(config.base_seed, l))
        for k in range(n_t):
            if eps > 0.0:
                est = stats.estimate(rec.plus[k], rec.minus[k], eps,
                                     config.x_report, replicate=l)
                vals[row, k] = est.values
            else:
                # degeneracy run: the coupled systems must match exactly
                if rec.plus[k].counts != rec.minus[k].counts:
                    raise RuntimeError(
                        f"eps=0 replicate {l} diverged at t={rec.plus[k].t}")
        elapsed[row] = rec.elapsed
        events[row] = rec.event_counts
        labels[row] = rec.label_counts
        extinct += rec.extinct
    return vals, elapsed, events, labels, extinct


def run_replicates(config: ExperimentConfig):
    """All replicates, distributed over config.workers processes."""
    if config.resolved_eps == 0.0 and config.algorithm == "independent":
        raise ValueError("eps=0 is a coupling degeneracy check; the "
                         "independent algorithm has no coupled pair to compare")
    every = list(range(config.replicates))
    if config.workers <= 1 or config.replicates == 1:
        return _replicate_rows(config, every)
    n_chunks = min(config.workers * 4, config.replicates)
    chunks = [every[i::n_chunks] for i in range(n_chunks)]
    ctx = multiprocessing.get_context("fork")
    parts = [None] * n_chunks
    with ProcessPoolExecutor(max_workers=config.workers,
                             mp_context=ctx) as pool:
        futures = {pool.submit(_replicate_rows, config, ch): i
                   for i, ch in enumerate(chunks)}
        for fut, i in futures.items():
            parts[i] = fut.result()
    n_t = len(config.output_times)
    vals = np.zeros((config.replicates, n_t, config.x_report + 1))
    elapsed = np.zeros((config.replicates, n_t))
    events = np.zeros((config.replicates, n_t, 9), dtype=np.int64)
    labels = np.zeros((config.replicates, n_t, 3), dtype=np.int64)
    extinct = 0
    for chunk, part in zip(chunks, parts):
        vals[chunk], elapsed[chunk] = part[0], part[1]
        events[chunk], labels[chunk] = part[2], part[3]
        extinct += part[4]
    return vals, elapsed, events, labels, extinct


def run_experiment(config: ExperimentConfig,
                   out_dir: str | None = None) -> ExperimentResult:
    """Run all replicates, aggregate, and (optionally) persist CSVs."""
    vals, elapsed, events, labels, extinct = run_replicates(config)
    per_time = []
    for k, t_k in enumerate(config.output_times):
        t_run_k = float(elapsed[:, k].sum())
        if config.replicates >= 2:
            per_time.append(stats.aggregate_matrix(
                vals[:, k, :], t=float(t_k), t_run=t_run_k,
                l_run=config.replicates))
        else:
            per_time.append(stats.RunStats(
                t=float(t_k), count=1, mean=vals[0, k].copy(),
                variance=np.full(config.x_report + 1, np.nan),
                t_run=t_run_k, l_run=1))
    result = ExperimentResult(
        config=config,
        stats=per_time,
        values=vals,
        event_totals=events.sum(axis=0),
        label_means=labels.mean(axis=0),
        elapsed_by_time=elapsed.sum(axis=0),
        t_run=float(elapsed[:, -1].sum()),
        extinct_count=extinct,
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_sensitivity_csv(os.path.join(out_dir, "sensitivity.csv"),
                              result)
        write_events_csv(os.path.join(out_dir, "events.csv"), result)
    return result


def oracle_reference(config: ExperimentConfig, x_max: int = 1024,
                     h: float = 1e-3) -> np.ndarray:
    """Deterministic central-difference reference shaped like the
    per-time estimate rows: (T, x_report + 1), overflow column zero."""
    eps = config.resolved_eps
    if eps == 0.0:
        return np.zeros((len(config.output_times), config.x_report + 1))
    ref = oracle.central_difference_ref(
        config.kernel, config.resolved_lam, eps, {1: 1.0},
        config.output_times, x_max=x_max, h=h)
    out = np.zeros((len(config.output_times), config.x_report + 1))
    out[:, 1:] = ref[:, 1:config.x_report + 1]
    return out


# ---------------------------------------------------------------------------
# CSV persistence (atomic: temp file + rename; floats via repr round-trip)


def _write_atomic(path: str, header: str, rows) -> None:
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header.split(","))
            for row in rows:
                writer.writerow(row)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"failed writing {path}: {exc}") from exc


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _sensitivity_rows(config, per_time, source: str, n_col: int, l_col: int):
    lam = config.resolved_lam
    eps = config.resolved_eps
    algorithm = config.algorithm if source == "mc" else "oracle"
    for rs in per_time:
        lo, hi = rs.ci_low(), rs.ci_high()
        for size in list(range(1, config.x_report + 1)) + [0]:
            yield [_fmt(rs.t), size, _fmt(rs.mean[size]),
                   _fmt(rs.variance[size]), _fmt(lo[size]), _fmt(hi[size]),
                   algorithm, n_col, l_col, _fmt(eps), _fmt(lam),
                   config.kernel, source]


def write_sensitivity_csv(path: str, result: ExperimentResult,
                          reference: np.ndarray | None = None) -> None:
    """Per-time, per-size aggregate rows; sizes 1..x_report then the
    size-0 overflow row.  Optional oracle rows appended (source=oracle,
    zero variance, N=L=0)."""
    cfg = result.config
    rows = list(_sensitivity_rows(cfg, result.stats, "mc",
                                  cfg.n_particles, cfg.replicates))
    if reference is not None:
        oracle_stats = [
            stats.RunStats(t=float(t_k), count=1, mean=reference[k],
                           variance=np.zeros_like(reference[k]),
                           t_run=0.0, l_run=1)
            for k, t_k in enumerate(cfg.output_times)]
        rows.extend(_sensitivity_rows(cfg, oracle_stats, "oracle", 0, 0))
    _write_atomic(path, SENSITIVITY_HEADER, rows)


def write_oracle_csv(path: str, config: ExperimentConfig,
                     reference: np.ndarray) -> None:
    """Deterministic reference only, same schema, source=oracle."""
    oracle_stats = [
        stats.RunStats(t=float(t_k), count=1, mean=reference[k],
                       variance=np.zeros_like(reference[k]),
                       t_run=0.0, l_run=1)
        for k, t_k in enumerate(config.output_times)]
    _write_atomic(path, SENSITIVITY_HEADER,
                  _sensitivity_rows(config, oracle_stats, "oracle", 0, 0))


def write_events_csv(path: str, result: ExperimentResult) -> None:
    rows = []
    for k, t_k in enumerate(result.config.output_times):
        row = [_fmt(float(t_k)), result.config.algorithm]
        row += [int(result.event_totals[k, c]) for c in range(9)]
        row += [_fmt(result.label_means[k, j]) for j in range(3)]
        rows.append(row)
    _write_atomic(path, EVENTS_HEADER, rows)


def write_convergence_csv(path: str, table) -> None:
    rows = [[n, l, _fmt(c), _fmt(s)] for n, l, c, s in table]
    _write_atomic(path, CONVERGENCE_HEADER, rows)


def write_efficiency_csv(path: str, table) -> None:
    rows = [[_fmt(t), alg, _fmt(tpr), _fmt(v), _fmt(ineff)]
            for t, alg, tpr, v, ineff in table]
    _write_atomic(path, EFFICIENCY_HEADER, rows)


def read_rows(path: str) -> list[dict]:
    """Parse a CSV artifact back into dict rows (strings preserved)."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# studies


def run_convergence_study(config: ExperimentConfig, out_dir: str | None = None,
                          reference: str = "oracle", oracle_x_max: int = 1024,
                          oracle_h: float = 1e-3):
    """c_tot against a reference across the N ladder with N*L fixed.

    Returns (table, slope, results) where table rows are
    (N, L, c_tot, slope_partial) and slope is the full-ladder log-log
    fit.  reference: "oracle" (default) or "largest" (the largest-N
    run's own means serve as reference and its row is dropped).
    """
    ladder = sorted(config.ladder)
    if len(ladder) < 4:
        raise ValueError("need a ladder of at least 4 N values")
    results = []
    for n in ladder:
        l_rep = max(2, round(config.budget / n))
        cfg_n = replace(config, n_particles=n, replicates=l_rep)
        results.append(run_experiment(cfg_n))
    if reference == "oracle":
        ref = oracle_reference(config, x_max=oracle_x_max, h=oracle_h)
        scored = results
    elif reference == "largest":
        ref = np.stack([rs.mean for rs in results[-1].stats])
        scored = results[:-1]
    else:
        raise ValueError(f"unknown reference {reference!r}")
    table = []
    points = []
    for res in scored:
        c_tot = stats.systematic_error_total(res.stats, ref)
        points.append((res.config.n_particles, c_tot))
        slope_part = (stats.fit_loglog_slope(points) if len(points) >= 3
                      else float("nan"))
        table.append((res.config.n_particles, res.config.replicates,
                      c_tot, slope_part))
    slope = stats.fit_loglog_slope(points)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_convergence_csv(os.path.join(out_dir, "convergence.csv"), table)
    return table, slope, results


def run_efficiency_study(config: ExperimentConfig,
                         out_dir: str | None = None):
    """Per-time inefficiency of each algorithm relative to double.

    Returns (table, results_by_algorithm); table rows are
    (t, algorithm, t_run_per_run_sec, total_variance, inefficiency).
    """
    algorithms = ("independent", "single", "double")
    by_alg = {}
    for alg in algorithms:
        by_alg[alg] = run_experiment(replace(config, algorithm=alg))
    table = []
    for k, t_k in enumerate(config.output_times):
        base = by_alg["double"].stats[k]
        for alg in algorithms:
            rs = by_alg[alg].stats[k]
            table.append((float(t_k), alg, rs.t_run / rs.l_run,
                          stats.e_totalstat(rs),
                          stats.inefficiency(rs, base)))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_efficiency_csv(os.path.join(out_dir, "efficiency.csv"), table)
    return table, by_alg
