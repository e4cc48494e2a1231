"""
Closed-form Hamiltonian family for the cartel's production choice, and the
Godunov flux used for the conservative z-advection of the price equation.

The cartel maximizes  -alpha/2 (q - q_circ)^2 + (p - c) q + xi (q + z - D(p))
over its production q, where xi is the marginal value of storage.  Besides
the unconstrained supremum H we need its monotone envelopes:

  h_down : restricted to controls with nonpositive storage drift,
  h_up   : restricted to controls with nonnegative storage drift,
  h_min  : the minimum over xi, attained at the drift-neutral control
           q = D(p) - z.

Everything reduces to the signed quantity

  w = sqrt(alpha) * (z - D(p) + q_circ) + (p - c + xi) / sqrt(alpha),

which equals sqrt(alpha) times the storage drift of the unconstrained
optimal control: H - h_min = w^2/2, h_down keeps the negative part of w,
h_up the positive part, so H = h_down + h_up - h_min identically.

All functions accept scalars or ndarrays and never raise on admissible
parameter sets; they are pure and trivially parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, demand

__all__ = ["HamiltonianEval", "h_full", "h_min", "h_down", "h_up", "godunov_flux"]


def _pos(x):
    return np.maximum(x, 0.0)


def _neg(x):
    """Nonnegative negative part: x = pos(x) - neg(x)."""
    return np.maximum(-x, 0.0)


@dataclass
class HamiltonianEval:
    """Value, xi-derivative and maximizing production of one Hamiltonian.

    d_xi equals q_opt + z - D(p), the storage drift induced by the optimal
    control (envelope theorem).
    """

    value: np.ndarray
    d_xi: np.ndarray
    q_opt: np.ndarray


def _w(z, p, xi, params: ModelParams):
    sa = np.sqrt(params.alpha)
    return sa * (z - demand(p, params) + params.q_circ) + (p - params.c + xi) / sa


def h_full(z, p, xi, params: ModelParams) -> HamiltonianEval:
    """Unconstrained production Hamiltonian.

    value = (p-c+xi)^2/(2 alpha) + xi (z - D(p)) + q_circ (p - c + xi),
    maximized at q_opt = q_circ + (p - c + xi)/alpha.  The production
    nonnegativity constraint is dropped: in the operating regime the
    unconstrained maximizer is always positive.
    """
    s = p - params.c + xi
    q_opt = params.q_circ + s / params.alpha
    value = s * s / (2.0 * params.alpha) + xi * (z - demand(p, params)) + params.q_circ * s
    d_xi = q_opt + z - demand(p, params)
    return HamiltonianEval(value=value, d_xi=d_xi, q_opt=q_opt)


def h_min(z, p, params: ModelParams):
    """Minimum of the Hamiltonian over xi; control q = D(p) - z (zero drift)."""
    gap = demand(p, params) - z
    return -0.5 * params.alpha * (gap - params.q_circ) ** 2 + (p - params.c) * gap


def h_down(z, p, xi, params: ModelParams) -> HamiltonianEval:
    """Nonincreasing envelope: production restricted to q <= D(p) - z."""
    w = _w(z, p, xi, params)
    sa = np.sqrt(params.alpha)
    value = 0.5 * _neg(w) ** 2 + h_min(z, p, params)
    d_xi = np.minimum(w, 0.0) / sa
    q_opt = np.minimum(demand(p, params) - z,
                       params.q_circ + (p - params.c + xi) / params.alpha)
    return HamiltonianEval(value=value, d_xi=d_xi, q_opt=q_opt)


def h_up(z, p, xi, params: ModelParams) -> HamiltonianEval:
    """Nondecreasing envelope: production restricted to q >= D(p) - z."""
    w = _w(z, p, xi, params)
    sa = np.sqrt(params.alpha)
    value = 0.5 * _pos(w) ** 2 + h_min(z, p, params)
    d_xi = np.maximum(w, 0.0) / sa
    q_opt = np.maximum(demand(p, params) - z,
                       params.q_circ + (p - params.c + xi) / params.alpha)
    return HamiltonianEval(value=value, d_xi=d_xi, q_opt=q_opt)


def godunov_flux(phi_k, p_left, p_right, params: ModelParams):
    """Godunov numerical flux for the conservative fringe advection.

    The flux function F(p) = phi*p + kappa/(2 lambda) (lambda*p - mu)^2 is an
    upward parabola with vertex at v = mu/lambda - phi/(kappa lambda); the
    interface value is the extremum of F over the interval spanned by the two
    neighboring prices (maximum when p_left <= p_right, minimum otherwise):

      flux = F(v) + (kappa lambda / 2) * max(pos(p_right - v)^2,
                                             neg(p_left - v)^2).

    phi_k is the price-independent part of the fringe drift at the node,
    f_storage(k) + b_tilde(z), frozen per column.
    """
    kl = params.kappa * params.lambda_b
    v = params.mu_b / params.lambda_b - phi_k / kl
    const = -phi_k * phi_k / (2.0 * kl) + (params.mu_b / params.lambda_b) * phi_k
    return const + 0.5 * kl * np.maximum(_pos(p_right - v) ** 2, _neg(p_left - v) ** 2)
