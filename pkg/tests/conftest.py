"""
Shared fixtures.  The expensive converged solves (CI grid 100x100) are
session-scoped and shared by the acceptance suite; everything else builds
small throwaway grids.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import cartelstore as cs

settings.register_profile(
    "ci", derandomize=True, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

CI_N = 100
CI_DT = 1e-3


def _solve(params, n, dt=CI_DT, tol=1e-6, max_iters=1_500_000):
    grid = cs.make_grid(params, n, n)
    settings_ = cs.SolveSettings(dt=dt, max_iters=max_iters, tol_residual=tol,
                                 tol_delta=None, checkpoint_every=5000)
    fields, report = cs.solve_stationary(params, grid,
                                         cs.default_init(params, grid),
                                         settings_)
    assert report.converged, f"fixture solve failed: {report.stop_reason}"
    return params, grid, fields, report


@pytest.fixture(scope="session")
def baseline_run():
    """Converged baseline solution on the CI grid."""
    return _solve(cs.baseline_params(), CI_N)


@pytest.fixture(scope="session")
def baseline_policy(baseline_run):
    params, grid, fields, report = baseline_run
    return cs.extract_policy(fields, grid, params, diag=report.diag)


@pytest.fixture(scope="session")
def appendix_run():
    """Converged storage-cost variant on the CI grid."""
    return _solve(cs.appendix_params(), CI_N)


@pytest.fixture(scope="session")
def baseline_cycle(baseline_run):
    """Noiseless trajectory from (k, z) = (0, 0.5) on the baseline fields."""
    params, grid, fields, _ = baseline_run
    return cs.simulate_trajectory(fields, grid, params, k0=0.0, z0=0.5,
                                  dt_sim=1e-3, T=60.0, seed=None)


@pytest.fixture(scope="session")
def appendix_cycle(appendix_run):
    params, grid, fields, _ = appendix_run
    return cs.simulate_trajectory(fields, grid, params, k0=0.0, z0=0.5,
                                  dt_sim=1e-3, T=60.0, seed=None)


@pytest.fixture(scope="session")
def baseline_measure(baseline_run):
    params, grid, fields, _ = baseline_run
    return cs.invariant_measure(fields, grid, params, T=1200.0, burn_in=60.0,
                                seed=7, dt_sim=1e-3)


@pytest.fixture(scope="session")
def small_random_state():
    """Rough random fields on a small grid for residual cross-checks."""
    rng = np.random.default_rng(42)
    params = cs.baseline_params()
    grid = cs.make_grid(params, 5, 5)
    U = 200.0 * rng.standard_normal(grid.shape)
    P = 62.5 + 150.0 * rng.standard_normal(grid.shape)
    return params, grid, U, P
