"""
Everything downstream of a solved (U, P) pair: the closed-form boundary
expansion at empty storage and its scheme validation, policy and drift
extraction with shock-line detection, noiseless trajectory simulation with
limit-cycle detection, and invariant-measure estimation from a long noisy run.

Boundary expansion.  Near empty storage, when the optimal drift points into
the boundary, V = dU/dk and the price admit square-root expansions

    V(k) ~ V0 + gamma * sqrt(k - k_min),    p(k) ~ p0 - beta * sqrt(k - k_min),

whose leading coefficients follow from matching singular orders in the
one-dimensional system: V0 and p0 solve a 2x2 linear system in closed form
and (gamma, beta) solve a homogeneous quadratic plus a normalization.  A
linear (smooth) ansatz is over-determined at first order and generically
inconsistent, which is why the singularity is expected;
smooth_ansatz_inconsistency quantifies that residual.

Random numbers.  All stochastic routines take an integer seed and use
numpy's PCG64 generator with Gaussian increments from standard_normal;
identical seeds give bit-identical outputs within one environment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hamiltonians import h_down, h_up
from .model import (
    FieldPair,
    Grid2D,
    ModelParams,
    PolicyFields,
    b_tilde,
    demand,
    f_storage,
    storage_cost,
)
from .scheme import BoundaryDiagnostics, SchemeOperator

__all__ = [
    "AsymptoticData",
    "SmoothAnsatzReport",
    "Trajectory",
    "MeasureHistogram",
    "boundary_asymptotics",
    "smooth_ansatz_inconsistency",
    "fit_boundary_exponent",
    "extract_policy",
    "simulate_trajectory",
    "detect_cycle",
    "segment_phases",
    "invariant_measure",
]


# ---------------------------------------------------------------------------
# Boundary expansion at empty storage
# ---------------------------------------------------------------------------

@dataclass
class AsymptoticData:
    """Coefficients of the square-root boundary expansion at k_min.

    When feasible, the constructed pair satisfies the two defining relations
    (gamma - x_plus*beta)(gamma - x_minus*beta) = 0 and
    beta*((alpha*eps + 1)*beta - gamma) = 2*alpha*(g(k_min) + r*p0); their
    residuals are stored for verification.
    """

    V0: float
    p0: float
    lambda_ratio: float
    x_plus: float
    x_minus: float
    gamma: float            # nan when infeasible
    beta: float             # nan when infeasible
    exponent: float         # 1/2 for both V and p
    feasible: bool
    uniqueness_ok: bool     # (alpha*eps)^2 + alpha*eps - 1 > 0
    x_plus_excluded: bool   # x_plus > 1 + alpha*eps
    residual_root: float
    residual_norm: float
    note: str = ""


def boundary_asymptotics(params: ModelParams, z: float) -> AsymptoticData:
    """Closed-form expansion coefficients at empty storage for fringe level z.

    Requires alpha*epsilon not in {-2, 0}.  The positive root is taken for
    beta (price decreasing in k near empty storage); if the normalization
    radicand is nonpositive the expansion is flagged infeasible instead of
    raising.
    """
    a = params.alpha
    eps = params.epsilon
    ae = a * eps
    if ae in (0.0, -2.0):
        raise ValueError("boundary_asymptotics: alpha*epsilon in {-2, 0}")
    den = eps * (2.0 + ae)
    cq = params.c - a * params.q_circ
    V0 = (z - 1.0 + eps * cq) / den
    p0 = (eps * cq + (1.0 + ae) * (1.0 - z)) / den
    g0 = float(storage_cost(params.k_min, params))
    lam = params.r * V0 / (params.r * p0 + g0)
    s = 1.0 + 2.0 * ae - lam
    disc = s * s - 4.0 * (1.0 - lam * (1.0 + ae))
    uniq = ae * ae + ae - 1.0 > 0.0
    if disc < 0.0:
        return AsymptoticData(V0, p0, lam, math.nan, math.nan, math.nan,
                              math.nan, 0.5, False, uniq, False, math.nan,
                              math.nan, note="complex root pair")
    x_plus = 0.5 * (s + math.sqrt(disc))
    x_minus = 0.5 * (s - math.sqrt(disc))
    excluded = x_plus > 1.0 + ae
    radicand_den = (ae + 1.0) - x_minus
    num = 2.0 * a * (g0 + params.r * p0)
    note = ""
    if radicand_den == 0.0 or num / radicand_den <= 0.0:
        return AsymptoticData(V0, p0, lam, x_plus, x_minus, math.nan, math.nan,
                              0.5, False, uniq, excluded, math.nan, math.nan,
                              note="no admissible singular expansion")
    beta = math.sqrt(num / radicand_den)
    gamma = x_minus * beta
    scale = max(1.0, abs(beta) ** 2)
    res_root = (gamma - x_plus * beta) * (gamma - x_minus * beta) / scale
    res_norm = (beta * ((ae + 1.0) * beta - gamma) - num) / max(1.0, abs(num))
    return AsymptoticData(V0, p0, lam, x_plus, x_minus, gamma, beta, 0.5,
                          True, uniq, excluded, res_root, res_norm, note=note)


@dataclass
class SmoothAnsatzReport:
    """Outcome of forcing a linear (exponent-one) boundary expansion.

    slope_p and slope_v are the would-be linear slopes of p and V = dU/dk;
    residual is the left-over of the over-determined first-order matching,
    nonzero for generic parameters.
    """

    V0: float
    p0: float
    slope_p: float
    slope_v: float
    residual: float
    degenerate: bool = False


def smooth_ansatz_inconsistency(params: ModelParams, z: float) -> SmoothAnsatzReport:
    """Quantify how badly a smooth boundary expansion fails at empty storage.

    With exponent one, the zeroth-order matching pins p0 = -g(k_min)/r, then
    the vanishing-drift condition pins V0 and the value equation pins the
    price slope.  The two first-order relations then over-determine the value
    slope; the reported residual is the second relation evaluated at the
    slope solving the first.
    """
    a = params.alpha
    eps = params.epsilon
    r = params.r
    g0 = float(storage_cost(params.k_min, params))
    p0 = -g0 / r
    # zero optimal drift at the boundary
    V0 = params.c + a * (1.0 - z - params.q_circ) - (1.0 + a * eps) * p0
    e0 = (p0 - params.c + V0) / a + eps * V0 + params.q_circ
    if e0 == 0.0:
        return SmoothAnsatzReport(V0, p0, math.nan, math.nan, math.nan,
                                  degenerate=True)
    p1 = r * V0 / e0
    if p1 == 0.0:
        return SmoothAnsatzReport(V0, p0, p1, math.nan, math.nan,
                                  degenerate=True)
    # first-order price relation fixes the value slope ...
    v1 = a * (r - (1.0 / a + eps) * p1)
    # ... and the first-order value relation is left over
    e1 = p1 / a + (1.0 / a + eps) * v1
    residual = abs(e1 * p1)
    return SmoothAnsatzReport(V0, p0, p1, v1, residual)


# ---------------------------------------------------------------------------
# Policy, drifts and the shock line
# ---------------------------------------------------------------------------

def extract_policy(fields: FieldPair, grid: Grid2D, params: ModelParams,
                   diag: BoundaryDiagnostics | None = None) -> PolicyFields:
    """Optimal production, drifts and shock-line location from solved fields.

    Uses the one-sided difference actually active in the upwind scheme: the
    storage drift at a node is d_down(xi_left) + d_up(xi_right); the boundary
    rows follow the active branch (zero drift on price-controlled nodes).
    The production field is recovered from the drift via q* = drift + D(p) - z.
    """
    U, P = fields.U, fields.P
    op = SchemeOperator(params, grid)
    if diag is None:
        _, diag = op.residual(U, P)
    N, M = grid.N, grid.M
    Dku = (U[1:, :] - U[:-1, :]) / grid.dk
    zz = grid.z[None, :]
    drift = np.empty_like(U)
    dn = h_down(zz[:, :], P[1:, :], Dku, params)
    up = h_up(zz[:, :], P[:-1, :], Dku, params)
    drift[1:-1, :] = dn.d_xi[:-1, :] + up.d_xi[1:, :]
    drift[0, :] = np.where(diag.price_controlled_kmin, 0.0, up.d_xi[0, :])
    drift[N, :] = np.where(diag.price_controlled_kmax, 0.0, dn.d_xi[-1, :])
    q_star = drift - zz + demand(P, params)
    drift_z = (f_storage(grid.k[:, None], params) + b_tilde(zz, params)
               + params.kappa * (params.lambda_b * P - params.mu_b))
    jump = np.abs(np.diff(q_star, axis=1))          # (N+1, M)
    shock_j = np.argmax(jump, axis=1)
    rows = np.arange(N + 1)
    shock_jump = jump[rows, shock_j]
    shock_z = 0.5 * (grid.z[shock_j] + grid.z[shock_j + 1])
    return PolicyFields(q_star=q_star, drift_k=drift, drift_z=drift_z,
                        shock_j=shock_j, shock_z=shock_z, shock_jump=shock_jump)


def fit_boundary_exponent(fields: FieldPair, grid: Grid2D, params: ModelParams,
                          z_band=None, side: str = "kmin",
                          n_cells: int = 6,
                          policy: PolicyFields | None = None):
    """Log-log power-law fit of |storage drift| against distance to a k-bound.

    side="kmin" fits over the first interior cells where the drift points
    into empty storage (negative band); side="kmax" over the last cells with
    positive drift.  z_band optionally restricts the columns (as an index
    array); by default all columns with a same-signed drift across the fitted
    cells are used, excluding the technical forcing strips near the z bounds.
    Returns (mean exponent, per-column exponents, column indices).
    """
    if policy is None:
        policy = extract_policy(fields, grid, params)
    drift = policy.drift_k
    N = grid.N
    if side == "kmin":
        cells = np.arange(1, 1 + n_cells)
        dist = grid.k[cells] - params.k_min
        block = drift[cells, :]
        good_sign = (block < 0.0).all(axis=0)
    elif side == "kmax":
        cells = np.arange(N - n_cells, N)
        dist = params.k_max - grid.k[cells]
        block = drift[cells, :]
        good_sign = (block > 0.0).all(axis=0)
    else:
        raise ValueError("side must be 'kmin' or 'kmax'")
    if z_band is None:
        w = params.b_tilde_width
        interior = (grid.z >= params.z_min + w) & (grid.z <= params.z_max - w)
        band = np.flatnonzero(good_sign & interior)
    else:
        band = np.asarray(z_band)
        band = band[good_sign[band]]
    if band.size == 0:
        raise ValueError(f"fit_boundary_exponent: empty {side} band")
    lx = np.log(dist)[:, None]
    ly = np.log(np.abs(block[:, band]))
    lx_c = lx - lx.mean()
    slopes = (lx_c * (ly - ly.mean(axis=0))).sum(axis=0) / (lx_c ** 2).sum()
    return float(slopes.mean()), slopes, band


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Uniformly sampled path (t, k, z, p, q) under the solved feedback."""

    t: np.ndarray
    k: np.ndarray
    z: np.ndarray
    p: np.ndarray
    q: np.ndarray
    dt: float
    seed: int | None = None


class _Bilinear:
    """Bilinear interpolation of a node field, clamped to the grid box."""

    def __init__(self, field: np.ndarray, grid: Grid2D):
        self.rows = field.tolist()      # nested python floats: faster scalar loop
        self.k0 = float(grid.k[0])
        self.z0 = float(grid.z[0])
        self.inv_dk = 1.0 / grid.dk
        self.inv_dz = 1.0 / grid.dz
        self.N = grid.N
        self.M = grid.M

    def __call__(self, k: float, z: float) -> float:
        x = (k - self.k0) * self.inv_dk
        y = (z - self.z0) * self.inv_dz
        i = int(x)
        if i < 0:
            i = 0
        elif i > self.N - 1:
            i = self.N - 1
        j = int(y)
        if j < 0:
            j = 0
        elif j > self.M - 1:
            j = self.M - 1
        fx = x - i
        fy = y - j
        r0 = self.rows[i]
        r1 = self.rows[i + 1]
        a = r0[j] + fx * (r1[j] - r0[j])
        b = r0[j + 1] + fx * (r1[j + 1] - r0[j + 1])
        return a + fy * (b - a)


def _fringe_drift_scalar(k, z, p, params):
    rng = params.k_max - params.k_min
    up = (params.k_max - k) / rng
    dn = (k - params.k_min) / rng
    f = params.a_f * (up * up - dn * dn)
    w = params.b_tilde_width
    lo = (params.z_min + w - z) / w
    hi = (z - params.z_max + w) / w
    bt = params.b_tilde_amp * ((lo * lo if lo > 0.0 else 0.0)
                               - (hi * hi if hi > 0.0 else 0.0))
    return f + bt + params.kappa * (params.lambda_b * p - params.mu_b)


def simulate_trajectory(fields: FieldPair, grid: Grid2D, params: ModelParams,
                        k0: float, z0: float, dt_sim: float = 1e-3,
                        T: float = 50.0, seed: int | None = None) -> Trajectory:
    """Forward Euler under the solved feedback, started from (k0, z0).

    The production and price fields are interpolated bilinearly; the storage
    drift is q* + z - D(p) and the fringe drift is b(k, z, p), with optional
    Gaussian fringe noise of intensity nu_z when a seed is given.  Both
    states are clamped to their boxes (projected dynamics at the constraints).
    """
    if not (params.k_min <= k0 <= params.k_max and params.z_min <= z0 <= params.z_max):
        raise ValueError("start point outside the state box")
    policy = extract_policy(fields, grid, params)
    q_of = _Bilinear(policy.q_star, grid)
    p_of = _Bilinear(fields.P, grid)
    n = int(round(T / dt_sim))
    ts = np.empty(n + 1)
    ks = np.empty(n + 1)
    zs = np.empty(n + 1)
    ps = np.empty(n + 1)
    qs = np.empty(n + 1)
    k, z = float(k0), float(z0)
    kmin, kmax = params.k_min, params.k_max
    zmin, zmax = params.z_min, params.z_max
    eps = params.epsilon
    noise_scale = math.sqrt(2.0 * params.nu_z * dt_sim) if seed is not None else 0.0
    rng = np.random.Generator(np.random.PCG64(seed)) if seed is not None else None
    chunk: list[float] = []
    idx_chunk = 0
    for step in range(n + 1):
        p = p_of(k, z)
        q = q_of(k, z)
        ts[step] = step * dt_sim
        ks[step] = k
        zs[step] = z
        ps[step] = p
        qs[step] = q
        if step == n:
            break
        dk = q + z - (1.0 - eps * p)
        db = _fringe_drift_scalar(k, z, p, params)
        k += dk * dt_sim
        if rng is not None:
            if idx_chunk == len(chunk):
                chunk = rng.standard_normal(65536).tolist()
                idx_chunk = 0
            z += db * dt_sim + noise_scale * chunk[idx_chunk]
            idx_chunk += 1
        else:
            z += db * dt_sim
        if k < kmin:
            k = kmin
        elif k > kmax:
            k = kmax
        if z < zmin:
            z = zmin
        elif z > zmax:
            z = zmax
        assert kmin <= k <= kmax and zmin <= z <= zmax
    return Trajectory(t=ts, k=ks, z=zs, p=ps, q=qs, dt=dt_sim, seed=seed)


# ---------------------------------------------------------------------------
# Cycle detection and phase segmentation
# ---------------------------------------------------------------------------

def _crossing_times(t, signal, direction: int):
    """Linear-interpolated times where signal crosses zero in one direction."""
    s = signal * direction
    idx = np.flatnonzero((s[:-1] < 0.0) & (s[1:] >= 0.0))
    if idx.size == 0:
        return np.empty(0)
    frac = -s[idx] / (s[idx + 1] - s[idx])
    return t[idx] + frac * (t[idx + 1] - t[idx])


def detect_cycle(traj: Trajectory, settle_fraction: float = 0.5,
                 section: str = "k_up", locus=None):
    """Period estimate (years) from first returns to a Poincare section.

    The initial settle_fraction of the trajectory is discarded.  Sections:
    "k_up"/"k_down" cross the midpoint of the settled k-range moving right or
    left, "z_up"/"z_down" the same in z, and "shock" crosses the supplied
    shock locus (a callable z_s(k)) moving up.  Returns the mean spacing of
    successive crossings, or None when fewer than two crossings exist.
    """
    n0 = int(len(traj.t) * settle_fraction)
    t = traj.t[n0:]
    k = traj.k[n0:]
    z = traj.z[n0:]
    if t.size < 3:
        return None
    if section == "shock":
        if locus is None:
            raise ValueError("section='shock' needs the shock locus")
        sig, direction = z - np.asarray([locus(x) for x in k]), +1
    elif section in ("k_up", "k_down"):
        mid = 0.5 * (k.min() + k.max())
        if k.max() - k.min() < 1e-12:
            return None
        sig = k - mid
        direction = +1 if section == "k_up" else -1
    elif section in ("z_up", "z_down"):
        mid = 0.5 * (z.min() + z.max())
        if z.max() - z.min() < 1e-12:
            return None
        sig = z - mid
        direction = +1 if section == "z_up" else -1
    else:
        raise ValueError(f"unknown section {section!r}")
    times = _crossing_times(t, sig, direction)
    if times.size < 2:
        return None
    return float(np.diff(times).mean())


def segment_phases(traj: Trajectory, params: ModelParams,
                   settle_fraction: float = 0.5, dwell_band: float = 0.05,
                   min_duration: float = 0.05):
    """Label the settled trajectory with the four cycle phases.

    "alpha": dwell near empty storage; "beta": rightward storage sweep;
    "gamma": dwell near full storage; "delta": leftward sweep.  Dwells are
    within dwell_band of the storage range ends and take precedence over
    sweeps.  Returns a list of (label, t_start, t_end) segments with runs
    shorter than min_duration dropped.
    """
    n0 = int(len(traj.t) * settle_fraction)
    t = traj.t[n0:]
    k = traj.k[n0:]
    if t.size < 3:
        return []
    rel = (k - params.k_min) / (params.k_max - params.k_min)
    dk = np.gradient(k, t)
    vmax = np.abs(dk).max()
    if vmax == 0.0:
        return []
    sweep = 0.25 * vmax
    labels = np.where(rel <= dwell_band, "alpha",
                      np.where(rel >= 1.0 - dwell_band, "gamma",
                               np.where(dk > sweep, "beta",
                                        np.where(dk < -sweep, "delta", ""))))
    segments = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            if labels[start] and t[i - 1] - t[start] >= min_duration:
                segments.append((str(labels[start]), float(t[start]),
                                 float(t[i - 1])))
            start = i
    return segments


# ---------------------------------------------------------------------------
# Invariant measure
# ---------------------------------------------------------------------------

@dataclass
class MeasureHistogram:
    """Occupation-frequency histogram on the solver grid, total mass one."""

    density: np.ndarray     # (N+1, M+1)
    T: float
    burn_in: float
    seed: int
    dt: float


def invariant_measure(fields: FieldPair, grid: Grid2D, params: ModelParams,
                      T: float, burn_in: float, seed: int,
                      dt_sim: float = 1e-3, k0: float | None = None,
                      z0: float | None = None) -> MeasureHistogram:
    """Occupation histogram of one long noisy trajectory after burn-in.

    Requires nu_z > 0 (the noiseless dynamics collapse onto the cycle and
    give a degenerate measure).  Samples are binned to the nearest grid node
    and the counts normalized to unit mass.
    """
    if params.nu_z <= 0.0:
        raise ValueError("invariant_measure requires nu_z > 0")
    policy = extract_policy(fields, grid, params)
    q_of = _Bilinear(policy.q_star, grid)
    p_of = _Bilinear(fields.P, grid)
    rng = np.random.Generator(np.random.PCG64(seed))
    n = int(round(T / dt_sim))
    n_burn = int(round(burn_in / dt_sim))
    k = params.k_min if k0 is None else float(k0)
    z = 0.5 * (params.z_min + params.z_max) if z0 is None else float(z0)
    counts = np.zeros((grid.N + 1, grid.M + 1))
    kmin, kmax = params.k_min, params.k_max
    zmin, zmax = params.z_min, params.z_max
    eps = params.epsilon
    inv_dk = 1.0 / grid.dk
    inv_dz = 1.0 / grid.dz
    noise_scale = math.sqrt(2.0 * params.nu_z * dt_sim)
    N, M = grid.N, grid.M
    chunk_size = 65536
    done = 0
    while done < n:
        m = min(chunk_size, n - done)
        gauss = rng.standard_normal(m).tolist()
        for s in range(m):
            p = p_of(k, z)
            q = q_of(k, z)
            dk = q + z - (1.0 - eps * p)
            db = _fringe_drift_scalar(k, z, p, params)
            k += dk * dt_sim
            z += db * dt_sim + noise_scale * gauss[s]
            if k < kmin:
                k = kmin
            elif k > kmax:
                k = kmax
            if z < zmin:
                z = zmin
            elif z > zmax:
                z = zmax
            step = done + s + 1
            if step > n_burn:
                i = int((k - kmin) * inv_dk + 0.5)
                j = int((z - zmin) * inv_dz + 0.5)
                counts[i if i <= N else N, j if j <= M else M] += 1.0
        done += m
    total = counts.sum()
    if total == 0:
        raise ValueError("invariant_measure: burn-in longer than the run")
    return MeasureHistogram(density=counts / total, T=T, burn_in=burn_in,
                            seed=seed, dt=dt_sim)
