"""
Self-contained validation suite behind the ``validate`` command: oracle
equivalence checks for the closed forms (brute-force maximization, flux
scans, bisection), structural invariants (envelope identity, monotonicity),
a consistency refinement ladder, and a reduced-grid solve sanity check.

Each check returns CheckResult(name, passed, detail); run_validation collects
them and the CLI renders one row per check.  ``flux_fn`` exists as a fault
injection hook so the harness around the suite can itself be exercised.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .analysis import boundary_asymptotics, extract_policy
from .hamiltonians import godunov_flux, h_down, h_full, h_min, h_up
from .model import (
    ModelParams,
    demand,
    drift_b,
    make_grid,
    storage_cost,
)
from .scheme import assemble_residual, chi_root, chi_value
from .solver import SolveSettings, default_init, solve_stationary

__all__ = ["CheckResult", "run_validation", "render_table"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _lagrangian(q, z, p, xi, params):
    return (-0.5 * params.alpha * (q - params.q_circ) ** 2 + (p - params.c) * q
            + xi * (q + z - demand(p, params)))


def _random_state(rng, params):
    z = rng.uniform(params.z_min, params.z_max)
    p = rng.uniform(0.0, 700.0)
    xi = rng.uniform(-2500.0, 2500.0)
    return z, p, xi


def check_hamiltonian_oracle(params, rng, n_states=100, n_grid=10_000):
    """Closed forms vs grid maximization over q in [-2, 2] (the feasible-set
    endpoint D(p) - z is appended so constrained maxima are hit exactly)."""
    qs = np.linspace(-2.0, 2.0, n_grid + 1)
    dq = qs[1] - qs[0]
    slack = 0.25 * params.alpha * dq * dq     # 2x the curvature error bound
    worst = 0.0
    for _ in range(n_states):
        z, p, xi = _random_state(rng, params)
        gap = demand(p, params) - z
        vals = _lagrangian(qs, z, p, xi, params)
        for name, closed, feas in (
            ("full", h_full(z, p, xi, params).value, np.ones_like(qs, bool)),
            ("down", h_down(z, p, xi, params).value, qs <= gap),
            ("up", h_up(z, p, xi, params).value, qs >= gap),
        ):
            cand = vals[feas]
            edge = _lagrangian(gap, z, p, xi, params)
            brute = max(cand.max(), edge) if name != "full" else cand.max()
            if closed < brute - 1e-9:
                return CheckResult("hamiltonian-oracle", False,
                                   f"h_{name} below brute force by {brute - closed:.3e}")
            err = closed - brute
            tol = slack + 1e-4 * max(1.0, abs(closed))
            if err > tol:
                return CheckResult("hamiltonian-oracle", False,
                                   f"h_{name} above brute force by {err:.3e} (tol {tol:.3e})")
            worst = max(worst, abs(err))
    return CheckResult("hamiltonian-oracle", True, f"max gap {worst:.2e}")


def check_envelope_identity(params, rng, n_states=1000):
    z = rng.uniform(params.z_min, params.z_max, n_states)
    p = rng.uniform(-100.0, 700.0, n_states)
    xi = rng.uniform(-2500.0, 2500.0, n_states)
    lhs = h_full(z, p, xi, params).value
    rhs = (h_down(z, p, xi, params).value + h_up(z, p, xi, params).value
           - h_min(z, p, params))
    scale = np.maximum(1.0, np.abs(lhs))
    err = float(np.max(np.abs(lhs - rhs) / scale))
    return CheckResult("envelope-identity", err <= 1e-12, f"max rel err {err:.2e}")


def check_flux_scan(params, rng, n_triples=200, n_scan=10_000, flux_fn=None):
    """Closed-form flux vs scanning the extremum over the price interval."""
    flux_fn = flux_fn or godunov_flux
    worst = 0.0
    for _ in range(n_triples):
        phi = rng.uniform(-0.08, 0.08)
        pl = rng.uniform(-100.0, 700.0)
        pr = rng.uniform(-100.0, 700.0)
        ps = np.linspace(min(pl, pr), max(pl, pr), n_scan + 1)
        f_vals = (phi * ps + params.kappa / (2.0 * params.lambda_b)
                  * (params.lambda_b * ps - params.mu_b) ** 2)
        ref = f_vals.max() if pl <= pr else f_vals.min()
        got = float(flux_fn(phi, pl, pr, params))
        step = abs(pr - pl) / n_scan
        res_err = params.kappa * params.lambda_b / 8.0 * step * step
        err = max(abs(got - ref) - res_err, 0.0) / max(1e-3, abs(ref))
        worst = max(worst, err)
        if err > 1e-6:
            return CheckResult("godunov-flux-oracle", False,
                               f"flux mismatch {err:.2e} at phi={phi:.3g}, "
                               f"pl={pl:.6g}, pr={pr:.6g}")
    return CheckResult("godunov-flux-oracle", True, f"max rel err {worst:.2e}")


def check_chi_bisection(params, rng, n_cases=500):
    dz = (params.z_max - params.z_min) / 200.0
    worst = 0.0
    for _ in range(n_cases):
        phi = rng.uniform(-0.08, 0.08)
        pb = rng.uniform(-200.0, 700.0)
        pa = rng.uniform(-200.0, 700.0)
        g = rng.uniform(0.0, 10.0)
        root = chi_root(phi, pb, pa, g, dz, params)
        lo, hi = -1.0, 1.0
        while chi_value(lo, phi, pb, pa, dz, params) > -g:
            lo *= 2.0
        while chi_value(hi, phi, pb, pa, dz, params) < -g:
            hi *= 2.0
        while hi - lo > 1e-13 * max(1.0, abs(lo), abs(hi)):
            mid = 0.5 * (lo + hi)
            if chi_value(mid, phi, pb, pa, dz, params) < -g:
                lo = mid
            else:
                hi = mid
        err = abs(root.rho - 0.5 * (lo + hi))
        worst = max(worst, err)
        if err > 1e-10 * max(1.0, abs(root.rho)):
            return CheckResult("chi-root-bisection", False, f"root err {err:.2e}")
    return CheckResult("chi-root-bisection", True, f"max err {worst:.2e}")


def check_asymptotics(params):
    data = boundary_asymptotics(params, 0.5)
    a, e = params.alpha, params.epsilon
    den = e * (2.0 + a * e)
    v0_ref = (0.5 - 1.0 + e * (params.c - a * params.q_circ)) / den
    p0_ref = (e * (params.c - a * params.q_circ) + (1.0 + a * e) * 0.5) / den
    ok = (abs(data.V0 - v0_ref) <= 1e-9 * abs(v0_ref)
          and abs(data.p0 - p0_ref) <= 1e-9 * abs(p0_ref))
    if data.feasible:
        ok = ok and abs(data.residual_root) < 1e-9 and abs(data.residual_norm) < 1e-9
    return CheckResult("asymptotics-closed-form", ok,
                       f"V0={data.V0:.6f} p0={data.p0:.6f} feasible={data.feasible}")


def _poly_fields(params, grid):
    """Smooth synthetic fields plus exact continuous residuals at the nodes."""
    kk = grid.k[:, None]
    zz = grid.z[None, :]
    K = (kk - params.k_min) / (params.k_max - params.k_min)
    Z = (zz - params.z_min) / (params.z_max - params.z_min)
    U = 5.0 + 3.0 * K + 2.0 * Z + 1.5 * K * Z + 1.0 * K * K + 0.8 * Z * Z
    P = 60.0 + 25.0 * K - 30.0 * Z + 10.0 * K * Z + 8.0 * Z * Z
    dUk = (3.0 + 1.5 * Z + 2.0 * K) / (params.k_max - params.k_min)
    dUz = (2.0 + 1.5 * K + 1.6 * Z) / (params.z_max - params.z_min)
    dPk = (25.0 + 10.0 * Z) / (params.k_max - params.k_min)
    dPz = (-30.0 + 10.0 * K + 16.0 * Z) / (params.z_max - params.z_min)
    b = drift_b(kk + 0.0 * zz, zz + 0.0 * kk, P, params)
    hf = h_full(zz + 0.0 * kk, P, dUk, params)
    LU = -params.r * U + hf.value + b * dUz
    LP = (-params.r * P + hf.d_xi * dPk + b * dPz
          - np.asarray(storage_cost(kk, params)) * np.ones_like(P))
    return U, P, LU, LP


def check_consistency(params, sizes=(24, 48, 96)):
    errs_u, errs_p = [], []
    for n in sizes:
        grid = make_grid(params, n, n)
        U, P, LU, LP = _poly_fields(params, grid)
        res, _ = assemble_residual(U, P, grid, params)
        errs_u.append(np.abs(res.R_U[1:-1, :] - LU[1:-1, :]).max())
        errs_p.append(np.abs(res.R_P[1:-1, :] - LP[1:-1, :]).max())
    orders = [np.log2(errs_u[i] / errs_u[i + 1]) for i in range(len(sizes) - 1)]
    orders += [np.log2(errs_p[i] / errs_p[i + 1]) for i in range(len(sizes) - 1)]
    ok = min(orders) >= 0.8
    return CheckResult("scheme-consistency", ok,
                       "orders " + ", ".join(f"{o:.2f}" for o in orders))


def check_monotonicity(params, rng, n_nodes=40):
    """Perturbing a neighbor upward must not decrease the residual there."""
    grid = make_grid(params, 14, 14)
    U = 50.0 * rng.standard_normal(grid.shape)
    P = 62.5 + 80.0 * rng.standard_normal(grid.shape)
    res0, _ = assemble_residual(U, P, grid, params)
    delta = 1e-4
    for _ in range(n_nodes):
        i = rng.integers(1, grid.N)
        j = rng.integers(0, grid.M + 1)
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ii, jj = i + di, j + dj
            if not (0 <= jj <= grid.M):
                continue
            U2 = U.copy()
            U2[ii, jj] += delta
            res2, _ = assemble_residual(U2, P, grid, params)
            if res2.R_U[i, j] < res0.R_U[i, j] - 1e-12:
                return CheckResult(
                    "residual-monotonicity", False,
                    f"rU at ({i},{j}) decreased for U[{ii},{jj}]+")
            P2 = P.copy()
            P2[ii, jj] += delta
            res3, _ = assemble_residual(U, P2, grid, params)
            if res3.R_P[i, j] < res0.R_P[i, j] - 1e-12:
                return CheckResult(
                    "residual-monotonicity", False,
                    f"rP at ({i},{j}) decreased for P[{ii},{jj}]+")
    return CheckResult("residual-monotonicity", True, "spot checks passed")


def check_reduced_solve(params, N, M, dt=None, max_iters=None):
    """Converge a reduced grid and sanity-check the policy shock ordering."""
    N = min(N, 100)
    M = min(M, 100)
    grid = make_grid(params, N, M)
    if dt is None:
        dt = min(1e-3, 0.4 * grid.dk / 0.25)
    settings = SolveSettings(dt=dt, max_iters=max_iters or 2_000_000,
                             tol_residual=1e-6, tol_delta=None,
                             checkpoint_every=5000)
    fields, report = solve_stationary(params, grid, default_init(params, grid),
                                      settings)
    if not report.converged:
        return CheckResult("reduced-grid-solve", False,
                           f"not converged in {report.iterations} iterations "
                           f"(res {report.residual_sup:.2e})")
    policy = extract_policy(fields, grid, params)
    jump0 = policy.shock_jump[0]
    jumpN = policy.shock_jump[N]
    ok = jump0 > jumpN
    return CheckResult("reduced-grid-solve", ok,
                       f"{report.iterations} iters, res {report.residual_sup:.2e}, "
                       f"shock jump kmin={jump0:.4f} kmax={jumpN:.4f}")


def run_validation(params: ModelParams, N: int, M: int, seed: int = 20240901,
                   inject_flux_bug: bool = False, solve_dt=None,
                   skip_solve: bool = False):
    """Run all checks; returns (results, timings dict)."""
    rng = np.random.default_rng(seed)
    flux_fn = None
    if inject_flux_bug:
        def flux_fn(phi, pl, pr, p):   # deliberately wrong: fault injection
            return godunov_flux(phi, pl, pr, p) + 1e-3
    results = []
    timings = {}
    checks = [
        ("hamiltonian-oracle", lambda: check_hamiltonian_oracle(params, rng)),
        ("envelope-identity", lambda: check_envelope_identity(params, rng)),
        ("godunov-flux-oracle", lambda: check_flux_scan(params, rng, flux_fn=flux_fn)),
        ("chi-root-bisection", lambda: check_chi_bisection(params, rng)),
        ("asymptotics-closed-form", lambda: check_asymptotics(params)),
        ("scheme-consistency", lambda: check_consistency(params)),
        ("residual-monotonicity", lambda: check_monotonicity(params, rng)),
    ]
    if not skip_solve:
        checks.append(("reduced-grid-solve",
                       lambda: check_reduced_solve(params, N, M, dt=solve_dt)))
    for name, fn in checks:
        t0 = time.perf_counter()
        results.append(fn())
        timings[name] = time.perf_counter() - t0
    return results, timings


def render_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {status}  {r.detail}")
    return "\n".join(lines)
