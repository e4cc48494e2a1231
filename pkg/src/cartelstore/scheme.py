"""
Monotone first-order finite-difference residual of the coupled system for the
cartel value U and the arbitrage-free price P on the (k, z) lattice.

Interior nodes (0 < i < N, any j):

  rU = -r U + (sigma^2/2) D2k U + [h_down(xi_l) + h_up(xi_r) - h_min]
       + max(0,b) Dz+ U + min(0,b) Dz- U
  rP = -r P + (sigma^2/2) D2k P + d_down(xi_l) Dk- P + d_up(xi_r) Dk+ P
       + (Psi_{j+1/2} - Psi_{j-1/2}) / dz - g(k)

with one-sided differences xi_l = Dk- U, xi_r = Dk+ U, upwind z-advection for
U, and the Godunov flux Psi for the conservative z-advection of P.  The flux
at both interfaces of a node is evaluated with that node's own phi = f(k) +
b_tilde(z), which keeps the affine/quadratic price splitting of the flux exact.

Boundary columns i = 0 and i = N encode the storage state constraint.  At
empty storage the value equation becomes -r U + max(A, B) = 0 where

  A = h_up at the one-sided inner difference plus the upwinded z-advection
      (the "interior-like" regime: the arbitrageurs price the resource), and
  B = the best value the cartel can extract while holding the storage drift
      at zero, maximizing h_min + b * DzU over prices that admit no storage
      arbitrage ("price-controlled" regime).

The no-arbitrage constraint on admissible boundary prices reduces, after
shifting by the flux vertex, to a strictly increasing piecewise-quadratic
equation with a unique root (chi_root); feasible prices form the half line
above it (below it at full storage, where the inequalities reverse).  When A
wins, the price obeys the one-sided transport equation; when B wins the price
is pinned to the constrained maximizer.

Indifference band.  A sharp if/else between the two price equations is
degenerate in two ways.  At price-controlled nodes the tie A = B is
tangential by construction (the dwell control has zero drift, so the
restricted and unrestricted Hamiltonians coincide there), hence "tie goes to
the transport equation" contradicts the pinned price it is meant to certify.
And at the node where the shock line meets a k-bound the switch is
transversally inconsistent: the transport root lies in the price-controlled
region and the controlled price in the interior-like region, so a marching
scheme chatters between branches forever and the sharp residual map has no
zero there (the dynamics instead slide along the indifference surface A = B).
Both degeneracies are resolved by blending the two branch price-residuals
convexly over the one-sided band 0 <= A - B <= band: pure price-controlled
residual at and below the tie, pure transport residual above the band.  Both
components decrease in the local price, so the blend keeps the scheme
monotone, the blended equation always has a root, the tangential dwell price
is exact up to a blend correction that vanishes under grid refinement, and
the shock-foot fixed point agrees with the sliding limit of the sharp switch.
Away from the band the scheme is exactly the sharp one.  The band enters
nothing else: the value equation keeps max(A, B), and a node is reported as
price-controlled when the pinned-price residual carries the majority blend
weight (at dwell equilibria the discrete A - B is a positive tangential
offset that vanishes under refinement, so the raw sign would mislabel them).

At the z-edges the price flux uses zero-gradient ghost values and the upwind
U-term keeps only the inward-pointing side; the technical b_tilde term makes
the drift point inward there, so the ghost choice never feeds the solution.

assemble_residual stacks everything into full arrays; it is a pure function
of its inputs, evaluates nodes independently, and reduces nothing, so results
are bit-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonians import godunov_flux, h_down, h_min, h_up
from .model import (
    Grid2D,
    ModelParams,
    b_tilde,
    f_storage,
    sigma_vol,
    storage_cost,
)

__all__ = [
    "BRANCH_INTERIOR",
    "BRANCH_PRICE",
    "BoundaryNodeDiag",
    "BoundaryDiagnostics",
    "ChiRoot",
    "ResidualPair",
    "SchemeOperator",
    "assemble_residual",
    "boundary_price_max_kmin",
    "boundary_price_max_kmax",
    "chi_root",
    "chi_value",
    "residual_boundary_kmax",
    "residual_boundary_kmin",
    "residual_interior",
]

BRANCH_INTERIOR = "interior-like"
BRANCH_PRICE = "price-controlled"

# Relative width of the boundary branch-indifference band: the branch
# price-residuals are blended where 0 <= A - B <= SWITCH_BAND * max(1,|A|,|B|).
# The ramp is one-sided because at price-controlled nodes the tie A = B is
# tangential by construction (the drift-neutral control makes the restricted
# and unrestricted values coincide), so exact ties must resolve to the
# price-controlled residual for the pinned price to be an exact solution.
# The width is large enough that the blended equation is no stiffer than the
# sharp branches at the pseudo-time steps in use; because the ramp is
# one-sided, widening it further *reduces* the dwell-price distortion (the
# weight at the pinned price scales like (A - B)/band), so the wide setting
# is safe on both degeneracies.
SWITCH_BAND = 5e-2


def _switch_weight(A, B):
    """Weight of the interior-like price residual: 0 at and below the tie
    A = B, ramping linearly to 1 at A - B = band."""
    delta = SWITCH_BAND * np.maximum(1.0, np.maximum(np.abs(A), np.abs(B)))
    return np.clip((A - B) / delta, 0.0, 1.0)


@dataclass
class ResidualPair:
    """Residuals of the U- and P-equations at every node; a field pair is a
    discrete solution iff both vanish (within solver tolerance)."""

    R_U: np.ndarray
    R_P: np.ndarray

    def sup_norms(self) -> tuple[float, float]:
        return float(np.abs(self.R_U).max()), float(np.abs(self.R_P).max())


@dataclass
class BoundaryNodeDiag:
    branch: str
    p_star: float | None


@dataclass
class BoundaryDiagnostics:
    """Active boundary branch per node: True where the price-controlled branch
    B attains the max; p_star holds the constrained maximizer there (nan on
    interior-like nodes)."""

    price_controlled_kmin: np.ndarray
    p_star_kmin: np.ndarray
    price_controlled_kmax: np.ndarray
    p_star_kmax: np.ndarray


@dataclass
class ChiRoot:
    """Root of the boundary no-arbitrage equation in the shifted price
    rho = p - vertex, plus the resulting admissible-price threshold."""

    rho: float
    p_threshold: float


# ---------------------------------------------------------------------------
# Shifted-price root (scalar and vectorized)
# ---------------------------------------------------------------------------

def chi_value(rho, phi, p_below, p_above, dz: float, params: ModelParams):
    """The strictly increasing function whose root defines the boundary price
    threshold, evaluated at the shifted price rho."""
    kl = params.kappa * params.lambda_b
    v = params.mu_b / params.lambda_b - phi / kl
    c2 = 0.5 * kl / dz
    s_up = p_above - v
    s_dn = p_below - v
    return (params.r * (v + rho)
            - c2 * np.maximum(np.maximum(s_up, 0.0) ** 2, np.maximum(-rho, 0.0) ** 2)
            + c2 * np.maximum(np.maximum(rho, 0.0) ** 2, np.maximum(-s_dn, 0.0) ** 2))


def chi_root(phi, p_below, p_above, g_val, dz: float, params: ModelParams) -> ChiRoot:
    """Solve chi(rho) = -g for the unique shifted-price root, in closed form.

    chi is linear with slope r between -pos(p_above - v) and neg(p_below - v)
    and gains a quadratic term outside; the branch is selected by comparing
    the linear-branch root Q against those two break points.  Feasible
    boundary prices at empty storage are p >= rho + v.
    """
    r = params.r
    kl = params.kappa * params.lambda_b
    klz = kl / dz
    c2 = 0.5 * klz
    v = params.mu_b / params.lambda_b - phi / kl
    pu = max(p_above - v, 0.0)
    nd = max(-(p_below - v), 0.0)
    Q = -v + (c2 / r) * pu * pu - (c2 / r) * nd * nd - g_val / r
    if Q < -pu:
        disc = r * r + 2.0 * klz * (r * v + c2 * nd * nd + g_val)
        if disc < 0.0:
            raise ArithmeticError("chi_root: negative discriminant on lower branch")
        rho = (r - np.sqrt(disc)) / klz
    elif Q > nd:
        disc = r * r - 2.0 * klz * (r * v - c2 * pu * pu + g_val)
        if disc < 0.0:
            raise ArithmeticError("chi_root: negative discriminant on upper branch")
        rho = (-r + np.sqrt(disc)) / klz
    else:
        rho = Q
    return ChiRoot(rho=float(rho), p_threshold=float(rho + v))


def _chi_root_vec(v, p_below, p_above, g_val, dz, params):
    """Vectorized chi_root over a boundary row; v is the per-node flux vertex."""
    r = params.r
    kl = params.kappa * params.lambda_b
    klz = kl / dz
    c2 = 0.5 * klz
    pu = np.maximum(p_above - v, 0.0)
    nd = np.maximum(-(p_below - v), 0.0)
    Q = -v + (c2 / r) * pu * pu - (c2 / r) * nd * nd - g_val / r
    disc_lo = r * r + 2.0 * klz * (r * v + c2 * nd * nd + g_val)
    disc_hi = r * r - 2.0 * klz * (r * v - c2 * pu * pu + g_val)
    lo = Q < -pu
    hi = Q > nd
    if np.any(disc_lo[lo] < 0.0) or np.any(disc_hi[hi] < 0.0):
        raise ArithmeticError("chi_root: negative discriminant on a selected branch")
    rho_lo = (r - np.sqrt(np.maximum(disc_lo, 0.0))) / klz
    rho_hi = (-r + np.sqrt(np.maximum(disc_hi, 0.0))) / klz
    rho = np.where(lo, rho_lo, np.where(hi, rho_hi, Q))
    return rho, rho + v


# ---------------------------------------------------------------------------
# Price-controlled boundary maximization
# ---------------------------------------------------------------------------

def _hmin_coeffs(z, params):
    """h_min(z, p) = a2 p^2 + a1 p + a0."""
    a = params.alpha
    eps = params.epsilon
    gap0 = 1.0 - z - params.q_circ
    a2 = -(0.5 * a * eps * eps + eps)
    a1 = a * eps * gap0 + (1.0 - z) + eps * params.c
    a0 = -0.5 * a * gap0 * gap0 - params.c * (1.0 - z)
    return a2, a1, a0


def _price_controlled_max(z, v, s_r, s_l, p_thr, side, params):
    """Maximize h_min(z, p) + b(p) * DzU over the admissible half line.

    b(p) = kappa*lambda*(p - v) switches the upwind side of DzU at p = v, so
    the objective is piecewise concave quadratic: the piece with b >= 0 is
    weighted by the forward difference s_r, the piece with b <= 0 by the
    backward difference s_l.  side=+1 restricts to p >= p_thr (empty storage),
    side=-1 to p <= p_thr (full storage).  Each piece's clipped vertex is a
    candidate; the breakpoint v is covered by the clipping.
    """
    a2, a1, a0 = _hmin_coeffs(z, params)
    kl = params.kappa * params.lambda_b
    a1r = a1 + kl * s_r
    a1l = a1 + kl * s_l
    vert_r = -a1r / (2.0 * a2)
    vert_l = -a1l / (2.0 * a2)
    if side > 0:
        lo_r = max(p_thr, v)
        cand_r = max(vert_r, lo_r)
        f_r = (a2 * cand_r + a1r) * cand_r + a0 - kl * s_r * v
        if p_thr <= v:
            cand_l = min(max(vert_l, p_thr), v)
            f_l = (a2 * cand_l + a1l) * cand_l + a0 - kl * s_l * v
        else:
            cand_l, f_l = p_thr, -np.inf
    else:
        hi_l = min(p_thr, v)
        cand_l = min(vert_l, hi_l)
        f_l = (a2 * cand_l + a1l) * cand_l + a0 - kl * s_l * v
        if p_thr >= v:
            cand_r = max(min(vert_r, p_thr), v)
            f_r = (a2 * cand_r + a1r) * cand_r + a0 - kl * s_r * v
        else:
            cand_r, f_r = p_thr, -np.inf
    if f_r >= f_l:
        return float(f_r), float(cand_r)
    return float(f_l), float(cand_l)


def _z_one_sided(F, i, j, dz, M):
    """Forward/backward z-differences with zero-gradient ghosts at the edges."""
    s_r = (F[i, j + 1] - F[i, j]) / dz if j < M else 0.0
    s_l = (F[i, j] - F[i, j - 1]) / dz if j > 0 else 0.0
    return s_r, s_l


def _ghost_prices(P, i, j, M):
    p_above = P[i, j + 1] if j < M else P[i, j]
    p_below = P[i, j - 1] if j > 0 else P[i, j]
    return p_below, p_above


# ---------------------------------------------------------------------------
# Pointwise residuals (reference implementation, used by tests and docs;
# assemble_residual below is the vectorized equivalent)
# ---------------------------------------------------------------------------

def residual_interior(U, P, i: int, j: int, grid: Grid2D, params: ModelParams):
    """Residuals (rU, rP) of both equations at interior node (i, j)."""
    if not (1 <= i <= grid.N - 1) or not (0 <= j <= grid.M):
        raise IndexError(f"residual_interior: node ({i},{j}) out of range")
    k = grid.k[i]
    z = grid.z[j]
    p = P[i, j]
    phi = f_storage(k, params) + b_tilde(z, params)
    b = phi + params.kappa * (params.lambda_b * p - params.mu_b)
    xi_l = (U[i, j] - U[i - 1, j]) / grid.dk
    xi_r = (U[i + 1, j] - U[i, j]) / grid.dk
    dn = h_down(z, p, xi_l, params)
    up = h_up(z, p, xi_r, params)
    s_r, s_l = _z_one_sided(U, i, j, grid.dz, grid.M)
    sig2h = 0.5 * sigma_vol(k, params) ** 2
    d2u = (U[i + 1, j] - 2.0 * U[i, j] + U[i - 1, j]) / grid.dk**2
    d2p = (P[i + 1, j] - 2.0 * P[i, j] + P[i - 1, j]) / grid.dk**2
    rU = (-params.r * U[i, j] + sig2h * d2u
          + dn.value + up.value - h_min(z, p, params)
          + max(0.0, b) * s_r + min(0.0, b) * s_l)
    p_below, p_above = _ghost_prices(P, i, j, grid.M)
    flux = (godunov_flux(phi, p, p_above, params)
            - godunov_flux(phi, p_below, p, params)) / grid.dz
    rP = (-params.r * p + sig2h * d2p
          + dn.d_xi * (P[i, j] - P[i - 1, j]) / grid.dk
          + up.d_xi * (P[i + 1, j] - P[i, j]) / grid.dk
          + flux - storage_cost(k, params))
    return float(rU), float(rP)


def boundary_price_max_kmin(U, P, j: int, grid: Grid2D, params: ModelParams):
    """Value and maximizer of the price-controlled branch at empty storage."""
    z = grid.z[j]
    phi = f_storage(params.k_min, params) + b_tilde(z, params)
    g0 = float(storage_cost(params.k_min, params))
    p_below, p_above = _ghost_prices(P, 0, j, grid.M)
    root = chi_root(phi, p_below, p_above, g0, grid.dz, params)
    s_r, s_l = _z_one_sided(U, 0, j, grid.dz, grid.M)
    kl = params.kappa * params.lambda_b
    v = params.mu_b / params.lambda_b - phi / kl
    return _price_controlled_max(z, v, s_r, s_l, root.p_threshold, +1, params)


def boundary_price_max_kmax(U, P, j: int, grid: Grid2D, params: ModelParams):
    """Mirror of boundary_price_max_kmin at full storage (p <= threshold)."""
    z = grid.z[j]
    phi = f_storage(params.k_max, params) + b_tilde(z, params)
    gN = float(storage_cost(params.k_max, params))
    p_below, p_above = _ghost_prices(P, grid.N, j, grid.M)
    root = chi_root(phi, p_below, p_above, gN, grid.dz, params)
    s_r, s_l = _z_one_sided(U, grid.N, j, grid.dz, grid.M)
    kl = params.kappa * params.lambda_b
    v = params.mu_b / params.lambda_b - phi / kl
    return _price_controlled_max(z, v, s_r, s_l, root.p_threshold, -1, params)


def residual_boundary_kmin(U, P, j: int, grid: Grid2D, params: ModelParams):
    """Residuals and branch diagnostic at node (0, j)."""
    if not (0 <= j <= grid.M):
        raise IndexError("residual_boundary_kmin: j out of range")
    z = grid.z[j]
    p = P[0, j]
    phi = f_storage(params.k_min, params) + b_tilde(z, params)
    g0 = float(storage_cost(params.k_min, params))
    b = phi + params.kappa * (params.lambda_b * p - params.mu_b)
    xi_r = (U[1, j] - U[0, j]) / grid.dk
    up = h_up(z, p, xi_r, params)
    s_r, s_l = _z_one_sided(U, 0, j, grid.dz, grid.M)
    A = up.value + max(0.0, b) * s_r + min(0.0, b) * s_l
    B, p_star = boundary_price_max_kmin(U, P, j, grid, params)
    rU = -params.r * U[0, j] + max(A, B)
    p_below, p_above = _ghost_prices(P, 0, j, grid.M)
    flux = (godunov_flux(phi, p, p_above, params)
            - godunov_flux(phi, p_below, p, params)) / grid.dz
    rp_a = -params.r * p + up.d_xi * (P[1, j] - P[0, j]) / grid.dk + flux - g0
    theta = float(_switch_weight(A, B))
    rP = theta * rp_a + (1.0 - theta) * (p_star - p)
    if theta >= 0.5:
        return float(rU), float(rP), BoundaryNodeDiag(BRANCH_INTERIOR, None)
    return float(rU), float(rP), BoundaryNodeDiag(BRANCH_PRICE, p_star)


def residual_boundary_kmax(U, P, j: int, grid: Grid2D, params: ModelParams):
    """Residuals and branch diagnostic at node (N, j)."""
    if not (0 <= j <= grid.M):
        raise IndexError("residual_boundary_kmax: j out of range")
    N = grid.N
    z = grid.z[j]
    p = P[N, j]
    phi = f_storage(params.k_max, params) + b_tilde(z, params)
    gN = float(storage_cost(params.k_max, params))
    b = phi + params.kappa * (params.lambda_b * p - params.mu_b)
    xi_l = (U[N, j] - U[N - 1, j]) / grid.dk
    dn = h_down(z, p, xi_l, params)
    s_r, s_l = _z_one_sided(U, N, j, grid.dz, grid.M)
    A = dn.value + max(0.0, b) * s_r + min(0.0, b) * s_l
    B, p_star = boundary_price_max_kmax(U, P, j, grid, params)
    rU = -params.r * U[N, j] + max(A, B)
    p_below, p_above = _ghost_prices(P, N, j, grid.M)
    flux = (godunov_flux(phi, p, p_above, params)
            - godunov_flux(phi, p_below, p, params)) / grid.dz
    rp_a = -params.r * p + dn.d_xi * (P[N, j] - P[N - 1, j]) / grid.dk + flux - gN
    theta = float(_switch_weight(A, B))
    rP = theta * rp_a + (1.0 - theta) * (p_star - p)
    if theta >= 0.5:
        return float(rU), float(rP), BoundaryNodeDiag(BRANCH_INTERIOR, None)
    return float(rU), float(rP), BoundaryNodeDiag(BRANCH_PRICE, p_star)


# ---------------------------------------------------------------------------
# Vectorized full-grid residual
# ---------------------------------------------------------------------------

class SchemeOperator:
    """Precomputes per-grid coefficient arrays and evaluates the full residual.

    One instance per (params, grid) pair; reused across pseudo-time steps.
    """

    def __init__(self, params: ModelParams, grid: Grid2D):
        self.params = params
        self.grid = grid
        p = params
        kk = grid.k[:, None]
        zz = grid.z[None, :]
        self.fk = f_storage(kk, p)
        self.btz = b_tilde(zz, p)
        self.phi = self.fk + self.btz                       # (N+1, M+1)
        self.gk = np.asarray(storage_cost(kk, p), dtype=float)   # (N+1, 1)
        kl = p.kappa * p.lambda_b
        self.kl = kl
        self.v = p.mu_b / p.lambda_b - self.phi / kl        # flux vertex
        self.cflux = -self.phi**2 / (2.0 * kl) + (p.mu_b / p.lambda_b) * self.phi
        a = p.alpha
        eps = p.epsilon
        gap0 = 1.0 - zz - p.q_circ
        self.a2 = -(0.5 * a * eps * eps + eps)
        self.a1z = a * eps * gap0 + (1.0 - zz) + eps * p.c
        self.a0z = -0.5 * a * gap0 * gap0 - p.c * (1.0 - zz)
        self.zz = zz
        self.sqrt_a = np.sqrt(a)
        sig = sigma_vol(kk, p)
        self.sig2_half = 0.5 * np.asarray(sig, dtype=float) ** 2
        self.has_diffusion = bool(np.any(self.sig2_half > 0.0))

    # -- boundary helpers (vectorized over a row) --------------------------

    def _chi_row(self, i_row, P):
        M = self.grid.M
        p_row = P[i_row, :]
        p_above = np.concatenate([p_row[1:], p_row[-1:]])
        p_below = np.concatenate([p_row[:1], p_row[:-1]])
        g_val = float(self.gk[i_row, 0])
        return _chi_root_vec(self.v[i_row, :], p_below, p_above, g_val,
                             self.grid.dz, self.params)

    def _price_max_row(self, i_row, s_r, s_l, p_thr, side):
        kl = self.kl
        a2 = self.a2
        v = self.v[i_row, :]
        a1r = self.a1z[0] + kl * s_r
        a1l = self.a1z[0] + kl * s_l
        vert_r = -a1r / (2.0 * a2)
        vert_l = -a1l / (2.0 * a2)
        a0 = self.a0z[0]
        if side > 0:
            cand_r = np.maximum(vert_r, np.maximum(p_thr, v))
            f_r = (a2 * cand_r + a1r) * cand_r + a0 - kl * s_r * v
            cand_l = np.minimum(np.maximum(vert_l, p_thr), v)
            f_l = np.where(p_thr <= v,
                           (a2 * cand_l + a1l) * cand_l + a0 - kl * s_l * v,
                           -np.inf)
        else:
            cand_l = np.minimum(vert_l, np.minimum(p_thr, v))
            f_l = (a2 * cand_l + a1l) * cand_l + a0 - kl * s_l * v
            cand_r = np.maximum(np.minimum(vert_r, p_thr), v)
            f_r = np.where(p_thr >= v,
                           (a2 * cand_r + a1r) * cand_r + a0 - kl * s_r * v,
                           -np.inf)
        take_r = f_r >= f_l
        return np.where(take_r, f_r, f_l), np.where(take_r, cand_r, cand_l)

    # -- full residual ------------------------------------------------------

    def residual(self, U: np.ndarray, P: np.ndarray):
        p = self.params
        g = self.grid
        N, M = g.N, g.M
        inv_dk = 1.0 / g.dk
        inv_dz = 1.0 / g.dz
        sa = self.sqrt_a

        Dku = (U[1:, :] - U[:-1, :]) * inv_dk        # (N, M+1)
        Dkp = (P[1:, :] - P[:-1, :]) * inv_dk

        zterm = self.zz - 1.0 + p.q_circ + p.epsilon * P
        pc = P - p.c
        w_r = sa * zterm[:-1, :] + (pc[:-1, :] + Dku) / sa    # at (i, xi_r), i<=N-1
        w_l = sa * zterm[1:, :] + (pc[1:, :] + Dku) / sa      # at (i, xi_l), i>=1

        dup = np.maximum(w_r, 0.0) / sa
        ddn = np.minimum(w_l, 0.0) / sa
        hup = 0.5 * np.maximum(w_r, 0.0) ** 2                 # h_up - h_min
        hdn = 0.5 * np.minimum(w_l, 0.0) ** 2                 # h_down - h_min

        hmin = (self.a2 * P + self.a1z) * P + self.a0z
        b = self.kl * (P - self.v)
        bpos = np.maximum(b, 0.0)
        bneg = np.minimum(b, 0.0)

        zcols = np.zeros((N + 1, 1))
        dz_u = (U[:, 1:] - U[:, :-1]) * inv_dz
        DzrU = np.concatenate([dz_u, zcols], axis=1)
        DzlU = np.concatenate([zcols, dz_u], axis=1)
        upw_u = bpos * DzrU + bneg * DzlU

        P_up = np.concatenate([P[:, 1:], P[:, -1:]], axis=1)
        P_dn = np.concatenate([P[:, :1], P[:, :-1]], axis=1)
        half_kl = 0.5 * self.kl
        psi_r = self.cflux + half_kl * np.maximum(
            np.maximum(P_up - self.v, 0.0) ** 2, np.maximum(self.v - P, 0.0) ** 2)
        psi_l = self.cflux + half_kl * np.maximum(
            np.maximum(P - self.v, 0.0) ** 2, np.maximum(self.v - P_dn, 0.0) ** 2)
        fluxdiff = (psi_r - psi_l) * inv_dz

        RU = np.empty_like(U)
        RP = np.empty_like(P)

        RU[1:-1, :] = (-p.r * U[1:-1, :]
                       + hdn[:-1, :] + hup[1:, :] + hmin[1:-1, :]
                       + upw_u[1:-1, :])
        RP[1:-1, :] = (-p.r * P[1:-1, :]
                       + ddn[:-1, :] * Dkp[:-1, :] + dup[1:, :] * Dkp[1:, :]
                       + fluxdiff[1:-1, :] - self.gk[1:-1])
        if self.has_diffusion:
            d2u = (U[2:, :] - 2.0 * U[1:-1, :] + U[:-2, :]) / g.dk**2
            d2p = (P[2:, :] - 2.0 * P[1:-1, :] + P[:-2, :]) / g.dk**2
            RU[1:-1, :] += self.sig2_half[1:-1] * d2u
            RP[1:-1, :] += self.sig2_half[1:-1] * d2p

        # -- empty-storage boundary -----------------------------------------
        A0 = hup[0, :] + hmin[0, :] + upw_u[0, :]
        _, thr0 = self._chi_row(0, P)
        B0, pstar0 = self._price_max_row(0, DzrU[0, :], DzlU[0, :], thr0, +1)
        RU[0, :] = -p.r * U[0, :] + np.maximum(A0, B0)
        rp_a0 = (-p.r * P[0, :] + dup[0, :] * Dkp[0, :]
                 + fluxdiff[0, :] - self.gk[0])
        th0 = _switch_weight(A0, B0)
        branchA0 = th0 >= 0.5
        RP[0, :] = th0 * rp_a0 + (1.0 - th0) * (pstar0 - P[0, :])

        # -- full-storage boundary -------------------------------------------
        AN = hdn[-1, :] + hmin[N, :] + upw_u[N, :]
        _, thrN = self._chi_row(N, P)
        BN, pstarN = self._price_max_row(N, DzrU[N, :], DzlU[N, :], thrN, -1)
        RU[N, :] = -p.r * U[N, :] + np.maximum(AN, BN)
        rp_aN = (-p.r * P[N, :] + ddn[-1, :] * Dkp[-1, :]
                 + fluxdiff[N, :] - self.gk[N])
        thN = _switch_weight(AN, BN)
        branchAN = thN >= 0.5
        RP[N, :] = thN * rp_aN + (1.0 - thN) * (pstarN - P[N, :])

        diag = BoundaryDiagnostics(
            price_controlled_kmin=~branchA0,
            p_star_kmin=np.where(branchA0, np.nan, pstar0),
            price_controlled_kmax=~branchAN,
            p_star_kmax=np.where(branchAN, np.nan, pstarN),
        )
        return ResidualPair(R_U=RU, R_P=RP), diag


def assemble_residual(U, P, grid: Grid2D, params: ModelParams):
    """Full discrete residual map and boundary diagnostics.

    Pure function of its inputs: identical fields give bit-identical residual
    arrays.  Field shapes must match the grid.
    """
    shape = grid.shape
    if U.shape != shape or P.shape != shape:
        raise ValueError(f"assemble_residual: field shapes {U.shape}/{P.shape} "
                         f"do not match grid {shape}")
    return SchemeOperator(params, grid).residual(U, P)
