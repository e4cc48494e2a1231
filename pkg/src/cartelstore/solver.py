"""
Pseudo-time marching for the stationary system: with R the assembled residual
(negative-diagonal orientation, e.g. rU = -r U + ...), the iteration

    (U, P)  <-  (U, P) + dt * R(U, P)

is forward Euler on d(U,P)/dtau = R and contracts toward R = 0.  Writing the
system as F = -R, this is exactly the damped fixed-point induction
S - dt * F(S); the residual orientation is chosen so that the Jacobian of R
has negative diagonal entries and the explicit step is stable for small dt.

Convergence is declared when either the residual sup-norm or the successive
difference per unit pseudo-time drops below its tolerance (for this plain
Euler update the two quantities coincide; both are supported and each can be
disabled).  Non-finite values abort immediately with the last finite iterate
attached: the step size is never adapted, so a given (config, dt) pair always
reproduces the same run.

Also provides the one-dimensional constant-fringe variant, which drops the
z-advection entirely and uses the same boundary structure with closed-form
price-controlled branches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hamiltonians import h_down, h_min, h_up
from .model import (
    FieldPair,
    Grid1D,
    Grid2D,
    ModelParams,
    storage_cost,
)
from .scheme import (
    BRANCH_INTERIOR,
    BRANCH_PRICE,
    BoundaryDiagnostics,
    SchemeOperator,
    _switch_weight,
)

__all__ = [
    "SolveSettings",
    "SolveReport",
    "SolverDivergence",
    "solve_stationary",
    "default_init",
    "solve_1d",
    "Solution1D",
]


@dataclass(frozen=True)
class SolveSettings:
    """Controls for the explicit march.

    dt            : pseudo-time step (fixed; no adaptivity)
    max_iters     : iteration cap
    tol_residual  : stop when the residual sup-norm falls below this (None disables)
    tol_delta     : stop when sup|S_next - S| / dt falls below this (None disables)
    checkpoint_every : iterations between residual-history records
    """

    dt: float = 1e-5
    max_iters: int = 2_000_000
    tol_residual: float | None = 1e-6
    tol_delta: float | None = 1e-4
    checkpoint_every: int = 2000

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.tol_residual is None and self.tol_delta is None:
            raise ValueError("at least one stopping tolerance must be enabled")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class SolveReport:
    iterations: int
    res_u: float
    res_p: float
    converged: bool
    stop_reason: str                      # "residual", "delta" or "max_iters"
    history: list = field(default_factory=list)   # (iteration, res_u, res_p)
    diag: BoundaryDiagnostics | None = None

    @property
    def residual_sup(self) -> float:
        return max(self.res_u, self.res_p)


class SolverDivergence(RuntimeError):
    """Raised when an iterate turns non-finite; carries the last finite state."""

    def __init__(self, message: str, snapshot: FieldPair, report: SolveReport):
        super().__init__(message)
        self.snapshot = snapshot
        self.report = report


def default_init(params: ModelParams, grid: Grid2D) -> FieldPair:
    """Zero value field and flat price at mu/lambda, the zero of the
    price-dependent part of the fringe drift."""
    shape = grid.shape
    return FieldPair(U=np.zeros(shape), P=np.full(shape, params.price_vertex))


def solve_stationary(params: ModelParams, grid: Grid2D, init: FieldPair,
                     settings: SolveSettings) -> tuple[FieldPair, SolveReport]:
    """March the explicit update to a stationary point of the residual map.

    Returns the final fields and a report; raises SolverDivergence on
    non-finite iterates, returns converged=False when max_iters is hit.
    """
    if not init.all_finite():
        raise ValueError("initial fields must be finite")
    op = SchemeOperator(params, grid)
    U = init.U.astype(float).copy()
    P = init.P.astype(float).copy()
    dt = settings.dt
    history: list[tuple[int, float, float]] = []
    diag = None
    it = 0
    res_u = res_p = np.inf
    stop = "max_iters"
    converged = False
    last_finite = init.copy()
    while it < settings.max_iters:
        res, diag = op.residual(U, P)
        res_u, res_p = res.sup_norms()
        sup = max(res_u, res_p)
        if not np.isfinite(sup):
            report = SolveReport(it, res_u, res_p, False, "divergence",
                                 history, diag)
            raise SolverDivergence(
                f"non-finite residual at iteration {it}",
                last_finite, report)
        if it % settings.checkpoint_every == 0:
            history.append((it, res_u, res_p))
            # a finite residual implies finite fields
            last_finite = FieldPair(U.copy(), P.copy())
        if settings.tol_residual is not None and sup <= settings.tol_residual:
            stop, converged = "residual", True
            break
        # per-unit-pseudo-time successive difference of the Euler step
        if settings.tol_delta is not None and sup <= settings.tol_delta:
            stop, converged = "delta", True
            break
        U += dt * res.R_U
        P += dt * res.R_P
        it += 1
    history.append((it, res_u, res_p))
    report = SolveReport(iterations=it, res_u=res_u, res_p=res_p,
                         converged=converged, stop_reason=stop,
                         history=history, diag=diag)
    return FieldPair(U, P), report


# ---------------------------------------------------------------------------
# Constant-fringe (1D) variant
# ---------------------------------------------------------------------------

@dataclass
class Solution1D:
    U: np.ndarray
    P: np.ndarray
    branch_kmin: str
    branch_kmax: str
    p_star_kmin: float
    p_star_kmax: float
    report: SolveReport


def _hmin_argmax_halfline(z, bound, side, params):
    """Maximize the concave quadratic h_min(z, .) over a half line.

    side=+1: p >= bound; side=-1: p <= bound.  Returns (value, argmax): the
    unconstrained vertex when feasible, else the boundary point.
    """
    a = params.alpha
    eps = params.epsilon
    gap0 = 1.0 - z - params.q_circ
    a2 = -(0.5 * a * eps * eps + eps)
    a1 = a * eps * gap0 + (1.0 - z) + eps * params.c
    vert = -a1 / (2.0 * a2)
    if side > 0:
        p_star = max(vert, bound)
    else:
        p_star = min(vert, bound)
    return float(h_min(z, p_star, params)), float(p_star)


def residual_1d(U, P, z: float, grid: Grid1D, params: ModelParams):
    """Residual of the constant-fringe system plus boundary branch info."""
    N = grid.N
    dk = grid.dk
    r = params.r
    gk = np.asarray(storage_cost(grid.k, params), dtype=float)
    RU = np.empty_like(U)
    RP = np.empty_like(P)

    Dku = (U[1:] - U[:-1]) / dk
    Dkp = (P[1:] - P[:-1]) / dk
    dn = h_down(z, P[1:], Dku, params)       # xi_l at nodes 1..N
    up = h_up(z, P[:-1], Dku, params)        # xi_r at nodes 0..N-1
    hm = h_min(z, P, params)

    RU[1:-1] = -r * U[1:-1] + dn.value[:-1] + up.value[1:] - hm[1:-1]
    RP[1:-1] = (-r * P[1:-1] + dn.d_xi[:-1] * Dkp[:-1] + up.d_xi[1:] * Dkp[1:]
                - gk[1:-1])

    # empty storage: feasible controlled prices satisfy r*p + g >= 0
    A0 = float(up.value[0])
    B0, pstar0 = _hmin_argmax_halfline(z, -gk[0] / r, +1, params)
    RU[0] = -r * U[0] + max(A0, B0)
    th0 = float(_switch_weight(A0, B0))
    RP[0] = (th0 * (-r * P[0] + up.d_xi[0] * Dkp[0] - gk[0])
             + (1.0 - th0) * (pstar0 - P[0]))
    br0 = BRANCH_INTERIOR if th0 >= 0.5 else BRANCH_PRICE

    # full storage: inequalities reverse, feasible prices satisfy r*p + g <= 0
    AN = float(dn.value[-1])
    BN, pstarN = _hmin_argmax_halfline(z, -gk[N] / r, -1, params)
    RU[N] = -r * U[N] + max(AN, BN)
    thN = float(_switch_weight(AN, BN))
    RP[N] = (thN * (-r * P[N] + dn.d_xi[-1] * Dkp[-1] - gk[N])
             + (1.0 - thN) * (pstarN - P[N]))
    brN = BRANCH_INTERIOR if thN >= 0.5 else BRANCH_PRICE

    return RU, RP, (br0, brN, pstar0, pstarN)


def solve_1d(params: ModelParams, z: float, grid: Grid1D,
             settings: SolveSettings) -> Solution1D:
    """Explicit march for the constant-fringe variant at fringe level z."""
    U = np.zeros(grid.N + 1)
    P = np.full(grid.N + 1, params.price_vertex)
    dt = settings.dt
    history: list[tuple[int, float, float]] = []
    it = 0
    res_u = res_p = np.inf
    stop = "max_iters"
    converged = False
    info = (BRANCH_INTERIOR, BRANCH_INTERIOR, np.nan, np.nan)
    last_finite = FieldPair(U[:, None].copy(), P[:, None].copy())
    while it < settings.max_iters:
        RU, RP, info = residual_1d(U, P, z, grid, params)
        res_u = float(np.abs(RU).max())
        res_p = float(np.abs(RP).max())
        sup = max(res_u, res_p)
        if not np.isfinite(sup):
            report = SolveReport(it, res_u, res_p, False, "divergence", history)
            raise SolverDivergence(f"1d solve: non-finite residual at {it}",
                                   last_finite, report)
        if it % settings.checkpoint_every == 0:
            history.append((it, res_u, res_p))
            last_finite = FieldPair(U[:, None].copy(), P[:, None].copy())
        if settings.tol_residual is not None and sup <= settings.tol_residual:
            stop, converged = "residual", True
            break
        if settings.tol_delta is not None and sup <= settings.tol_delta:
            stop, converged = "delta", True
            break
        U += dt * RU
        P += dt * RP
        it += 1
    history.append((it, res_u, res_p))
    report = SolveReport(it, res_u, res_p, converged, stop, history)
    return Solution1D(U=U, P=P, branch_kmin=info[0], branch_kmax=info[1],
                      p_star_kmin=info[2], p_star_kmax=info[3], report=report)
