"""Coupled stochastic simulation of pairwise-merge particle systems for
parametric sensitivity estimation, with a deterministic reference
integrator and a study harness."""

from .config import ALGORITHMS, ExperimentConfig, build_config
from .ensemble import CoupledState, Label, MeasureSnapshot
from .harness import (run_convergence_study, run_efficiency_study,
                      run_experiment)
from .kernels import (FAMILIES, FactorizedMajorant, KernelSpec,
                      build_majorant, kernel_pair)
from .oracle import (canonical_triple, central_difference_ref,
                     integrate_coupled_limit, integrate_smoluchowski)
from .simulate import (TrajectoryRecord, effective_rates_double,
                       effective_rates_single, run_trajectory, step_double,
                       step_single)
from .stats import (RunStats, SensitivityEstimate, aggregate, estimate,
                    e_totalstat, fit_loglog_slope, inefficiency,
                    systematic_error_total)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "ExperimentConfig",
    "build_config",
    "CoupledState",
    "Label",
    "MeasureSnapshot",
    "run_experiment",
    "run_convergence_study",
    "run_efficiency_study",
    "FAMILIES",
    "KernelSpec",
    "FactorizedMajorant",
    "kernel_pair",
    "build_majorant",
    "integrate_smoluchowski",
    "central_difference_ref",
    "integrate_coupled_limit",
    "canonical_triple",
    "TrajectoryRecord",
    "run_trajectory",
    "step_single",
    "step_double",
    "effective_rates_single",
    "effective_rates_double",
    "SensitivityEstimate",
    "RunStats",
    "estimate",
    "aggregate",
    "systematic_error_total",
    "e_totalstat",
    "inefficiency",
    "fit_loglog_slope",
    "__version__",
]
