"""Reflected-SDE toolkit for inertial particle-pair dispersion in rough flows.

Simulates the reflected planar system and its auxiliary limits, evaluates the
piecewise Lyapunov construction with exact derivatives, certifies the drift,
boundary, and interface-flux inequalities on grids, and estimates long-run
statistics (time averages, tails, moments, exit-time transforms).
"""

__version__ = "0.1.0"

from .model import (AuxState, Chart, ExplosionScaleError, ModelParams, State,
                    diffusion_aux, diffusion_eta, diffusion_uvz, diffusion_xyz,
                    drift_aux, drift_eta, drift_uvz, drift_xyz, to_uvz, to_xyz)
from .lyapunov import (LedgerError, LyapunovParams, Region, classify,
                       make_lyapunov_params)
from .integrate import (ReflectedPath, StepConfig, StopReason, SystemKind,
                        simulate, skorokhod_step)
from .verify import (GridSpec, VerificationReport, run_full_suite,
                     search_admissible)

__all__ = [
    "AuxState", "Chart", "ExplosionScaleError", "ModelParams", "State",
    "diffusion_aux", "diffusion_eta", "diffusion_uvz", "diffusion_xyz",
    "drift_aux", "drift_eta", "drift_uvz", "drift_xyz", "to_uvz", "to_xyz",
    "LedgerError", "LyapunovParams", "Region", "classify",
    "make_lyapunov_params",
    "ReflectedPath", "StepConfig", "StopReason", "SystemKind", "simulate",
    "skorokhod_step",
    "GridSpec", "VerificationReport", "run_full_suite", "search_admissible",
    "__version__",
]
