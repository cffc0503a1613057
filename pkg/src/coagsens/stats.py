"""Replicate statistics: central-difference estimates, confidence
intervals, and the error and efficiency metrics of the study harness.

Per-size arrays use the layout of the CSV output: index 1..x_report are
the reported sizes and index 0 is the overflow bucket (everything past
x_report, number density). The overflow bucket is excluded from the
scalar summaries (systematic error total, total statistical error); it
exists so that reported rows always account for the whole population.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .ensemble import MeasureSnapshot

__all__ = [
    "ALPHA",
    "Z_ALPHA",
    "SensitivityEstimate",
    "RunStats",
    "estimate",
    "aggregate",
    "aggregate_matrix",
    "systematic_error_total",
    "e_totalstat",
    "inefficiency",
    "fit_loglog_slope",
]

ALPHA = 0.05
Z_ALPHA = NormalDist().inv_cdf(1.0 - ALPHA / 2.0)   # 1.959964...


@dataclass(frozen=True)
class SensitivityEstimate:
    """One replicate's per-size central difference at one time."""

    t: float
    replicate: int
    x_report: int
    values: np.ndarray   # [x_report + 1]; index 0 = overflow bucket

    def value(self, size: int) -> float:
        if not 1 <= size <= self.x_report:
            raise ValueError(f"size {size} outside 1..{self.x_report}")
        return float(self.values[size])


@dataclass(frozen=True)
class RunStats:
    """Aggregate over L replicates at one time."""

    t: float
    count: int
    mean: np.ndarray       # [x_report + 1]
    variance: np.ndarray   # sample variance, divisor L - 1
    t_run: float           # wall-clock of the replicate loop, seconds
    l_run: int             # replicates the wall-clock covers

    @property
    def x_report(self) -> int:
        return self.mean.size - 1

    def ci_half_width(self) -> np.ndarray:
        return Z_ALPHA * np.sqrt(self.variance / self.count)

    def ci_low(self) -> np.ndarray:
        return self.mean - self.ci_half_width()

    def ci_high(self) -> np.ndarray:
        return self.mean + self.ci_half_width()


def estimate(snap_plus: MeasureSnapshot, snap_minus: MeasureSnapshot,
             eps: float, x_report: int = 32,
             replicate: int = 0) -> SensitivityEstimate:
    """Per-size (plus density - minus density) / eps for one replicate.

    eps = 0 runs are degeneracy checks, not estimates; rejected here.
    """
    if eps <= 0.0:
        raise ValueError("central difference requires eps > 0")
    if snap_plus.t != snap_minus.t:
        raise ValueError(
            f"snapshots at different times ({snap_plus.t} vs {snap_minus.t})")
    vals = np.empty(x_report + 1, dtype=np.float64)
    vals[1:] = (snap_plus.density_array(x_report)[1:]
                - snap_minus.density_array(x_report)[1:]) / eps
    vals[0] = (snap_plus.overflow_number(x_report)
               - snap_minus.overflow_number(x_report)) \
        / (snap_plus.n_scale * eps)
    return SensitivityEstimate(t=snap_plus.t, replicate=replicate,
                               x_report=x_report, values=vals)


def aggregate_matrix(values: np.ndarray, t: float, t_run: float = 0.0,
                     l_run: int | None = None) -> RunStats:
    """Aggregate a stacked (L, sizes) value matrix."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 2:
        raise ValueError("need a 2-d matrix with at least 2 replicates")
    mean = values.mean(axis=0)
    var = values.var(axis=0, ddof=1)
    return RunStats(t=t, count=values.shape[0], mean=mean, variance=var,
                    t_run=t_run,
                    l_run=values.shape[0] if l_run is None else l_run)


def aggregate(estimates, t_run: float = 0.0,
              l_run: int | None = None) -> RunStats:
    """Mean, sample variance, and CI inputs across replicates."""
    ests = list(estimates)
    if len(ests) < 2:
        raise ValueError("variance needs at least 2 replicates")
    t = ests[0].t
    shape = ests[0].values.shape
    for e in ests:
        if e.t != t or e.values.shape != shape:
            raise ValueError("estimates disagree in time or size range")
    return aggregate_matrix(np.stack([e.values for e in ests]), t,
                            t_run, l_run)


def systematic_error_total(stats, reference) -> float:
    """Sum of |mean - reference| over output times and reported sizes
    (overflow bucket excluded)."""
    stats = list(stats)
    means = np.stack([s.mean for s in stats])
    ref = np.asarray(reference, dtype=np.float64)
    if ref.shape != means.shape:
        raise ValueError(
            f"reference shape {ref.shape} does not match stats {means.shape}")
    return float(np.abs(means[:, 1:] - ref[:, 1:]).sum())


def e_totalstat(stats: RunStats) -> float:
    """Total per-size estimator variance (overflow excluded)."""
    return float(stats.variance[1:].sum())


def inefficiency(alg: RunStats, double: RunStats) -> float:
    """Run time to reach a fixed statistical error, relative to the
    double-coupled run: (time/replicate * total variance) ratio; the
    target error cancels."""
    for s, name in ((alg, "algorithm"), (double, "double")):
        if not (s.t_run > 0.0 and s.l_run > 0):
            raise ValueError(f"{name} stats carry no timing data")
    v_double = e_totalstat(double)
    if v_double <= 0.0:
        raise ValueError("reference run has zero total variance")
    num = (alg.t_run / alg.l_run) * e_totalstat(alg)
    den = (double.t_run / double.l_run) * v_double
    return num / den


def fit_loglog_slope(points) -> float:
    """OLS slope of log(value) against log(N)."""
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points for a slope fit")
    if any(v <= 0.0 or n <= 0.0 for n, v in pts):
        raise ValueError("log-log fit needs positive coordinates")
    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    return float(np.polyfit(x, y, 1)[0])
