"""Experiment configuration.

Configs come from three layers merged in order of increasing
precedence: built-in defaults, a flat ``key = value`` config file, and
command-line overrides.  Files are deliberately primitive: one
assignment per line, ``#`` comments, lists comma-separated.  Keys use
short study-facing names (``N``, ``L``, ``lambda``); the dataclass
uses explicit field names.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from .kernels import FAMILIES

__all__ = [
    "ExperimentConfig",
    "ALGORITHMS",
    "FAMILY_DEFAULT_LAM",
    "FAMILY_DEFAULT_EPS",
    "parse_config_text",
    "load_config_file",
    "build_config",
]

ALGORITHMS = ("independent", "single", "double")

FAMILY_DEFAULT_LAM = {"additive": 1.0, "soot": 2.1}
FAMILY_DEFAULT_EPS = {"additive": 0.06, "soot": 0.03}

DEFAULT_OUTPUT_TIMES = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)

_MAX_SEED = (1 << 64) - 1


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: str = "additive"
    lam: float | None = None          # None -> family reference value
    eps: float | None = None          # None -> family default spread
    n_particles: int = 1024
    replicates: int = 16
    algorithm: str = "double"
    t_end: float = 3.0
    output_times: tuple[float, ...] = DEFAULT_OUTPUT_TIMES
    x_report: int = 32
    base_seed: int = 0
    workers: int = 1
    # study-specific knobs (convergence ladder, fixed particle budget)
    ladder: tuple[int, ...] = (25, 50, 100, 200, 400, 800)
    budget: int = 1 << 20

    def __post_init__(self):
        if self.kernel not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.kernel!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.n_particles < 2:
            raise ValueError("N must be at least 2")
        if self.replicates < 1:
            raise ValueError("L must be at least 1")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.output_times:
            raise ValueError("output_times must not be empty")
        if list(self.output_times) != sorted(self.output_times):
            raise ValueError("output_times must be ascending")
        if self.output_times[0] < 0 or self.output_times[-1] > self.t_end:
            raise ValueError("output_times must lie in [0, t_end]")
        if self.x_report < 1:
            raise ValueError("x_report must be at least 1")
        if not (0 <= self.base_seed <= _MAX_SEED):
            raise ValueError("seed must fit in 64 bits")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        if self.resolved_eps < 0:
            raise ValueError("eps must be non-negative")
        if not self.resolved_lam - self.resolved_eps / 2 > 0:
            raise ValueError("lambda - eps/2 must stay positive")
        if len(self.ladder) < 1 or any(n < 2 for n in self.ladder):
            raise ValueError("ladder entries must be >= 2")
        if self.budget < 1:
            raise ValueError("budget must be positive")

    @property
    def resolved_lam(self) -> float:
        return FAMILY_DEFAULT_LAM[self.kernel] if self.lam is None else self.lam

    @property
    def resolved_eps(self) -> float:
        return FAMILY_DEFAULT_EPS[self.kernel] if self.eps is None else self.eps


# file/CLI keys -> dataclass fields
_KEY_MAP = {
    "kernel": "kernel",
    "lambda": "lam",
    "eps": "eps",
    "N": "n_particles",
    "L": "replicates",
    "algorithm": "algorithm",
    "t_end": "t_end",
    "output_times": "output_times",
    "x_report": "x_report",
    "seed": "base_seed",
    "workers": "workers",
    "ladder": "ladder",
    "budget": "budget",
}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines into a raw string mapping."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in _KEY_MAP:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def load_config_file(path: str | Path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text())


def _coerce(key: str, value: str):
    field = _KEY_MAP[key]
    if field in ("kernel", "algorithm"):
        return value
    if field in ("lam", "eps", "t_end"):
        return float(value)
    if field in ("n_particles", "replicates", "x_report", "base_seed",
                 "workers", "budget"):
        return int(value, 0)
    if field == "output_times":
        return tuple(float(v) for v in value.split(",") if v.strip())
    if field == "ladder":
        return tuple(int(v, 0) for v in value.split(",") if v.strip())
    raise AssertionError(field)


def build_config(*layers: Mapping[str, str] | None) -> ExperimentConfig:
    """Merge raw string mappings (later layers win) into a config."""
    merged: dict[str, object] = {}
    for layer in layers:
        if not layer:
            continue
        for key, value in layer.items():
            if key not in _KEY_MAP:
                raise ValueError(f"unknown config key {key!r}")
            merged[_KEY_MAP[key]] = _coerce(key, value)
    return ExperimentConfig(**merged)
