"""Feasibility-weighted MPPI control for a quadrotor among moving obstacles.

Subpackages:
    dynamics     rigid-body quadrotor plant, RK4 integration
    mppi         the sampling controller: perturbations, rollouts, weights
    constraints  spherical obstacles, margins, penalties, verdicts
    surrogate    deep-ensemble constraint regressor with predictive spread
    bc           feasibility weighting layer on top of the core controller
    scenario     obstacle/target scenario files and randomization
    harness      closed-loop episodes, dataset generation, sweeps, metrics
    cli          the `bcmppi` command-line entry point
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
