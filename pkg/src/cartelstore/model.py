"""
Model data shared by the whole package: scalar parameters, coefficient
functions, the uniform (k, z) grid and the solution fields.

State variables
---------------
k : speculative storage level, constrained to [k_min, k_max]
z : aggregate production rate of the competitive fringe, in [z_min, z_max]

Both are expressed as fractions of annual demand; one time unit is one year.

The fringe production drifts with b(k, z, p) = f(k) + kappa*(lambda*p - mu)
plus a purely technical inward-pointing term b_tilde(z) supported only near
the z bounds, which keeps trajectories inside the computational box without
affecting the interior solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ModelParams",
    "Grid2D",
    "Grid1D",
    "FieldPair",
    "PolicyFields",
    "baseline_params",
    "appendix_params",
    "make_grid",
    "make_grid_1d",
    "demand",
    "f_storage",
    "b_tilde",
    "drift_b",
    "storage_cost",
    "sigma_vol",
]


@dataclass(frozen=True)
class ModelParams:
    """All scalar model constants.

    q, z and k are demand fractions; p is in price units (dollars/unit);
    r, kappa, nu_z are per year.
    """

    r: float            # discount rate
    epsilon: float      # demand elasticity, D(p) = 1 - epsilon*p
    alpha: float        # production-deviation penalty
    q_circ: float       # target cartel share
    c: float            # unit production cost
    kappa: float        # fringe-investment response magnitude
    lambda_b: float     # price coefficient in the investment response
    mu_b: float         # investment response offset: kappa*(lambda_b*p - mu_b)
    a_f: float          # amplitude of the storage modulation f(k)
    nu_z: float         # fringe-production noise intensity
    k_min: float
    k_max: float
    z_min: float
    z_max: float
    g_coeff: float = 0.0        # storage-cost coefficient (0 disables the cost)
    g_exponent: float = 3.0     # storage-cost exponent
    sigma_spec: str = "zero"    # storage volatility; only the zero spec is supported
    b_tilde_width: float = 0.02     # z-width of the technical boundary forcing
    b_tilde_amp: float = 0.05      # amplitude of the technical boundary forcing

    def __post_init__(self):
        if not (self.r > 0 and self.alpha > 0 and self.epsilon > 0
                and self.kappa > 0 and self.lambda_b > 0):
            raise ValueError("r, alpha, epsilon, kappa, lambda_b must be positive")
        if not self.k_min < self.k_max:
            raise ValueError("k_min must be < k_max")
        if not self.z_min < self.z_max:
            raise ValueError("z_min must be < z_max")
        if self.sigma_spec != "zero":
            raise ValueError(
                f"unsupported sigma_spec {self.sigma_spec!r}: only 'zero' is implemented")
        if self.b_tilde_width <= 0:
            raise ValueError("b_tilde_width must be positive")

    @property
    def price_vertex(self) -> float:
        """Price at which the pure investment response kappa*(lambda*p - mu) vanishes."""
        return self.mu_b / self.lambda_b

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


def baseline_params() -> ModelParams:
    """Parameter set of the baseline experiment (no storage cost)."""
    return ModelParams(
        r=0.1, epsilon=4e-4, alpha=1e4, q_circ=0.42, c=10.0,
        kappa=2e-3, lambda_b=0.4, mu_b=25.0, a_f=0.01, nu_z=1e-4,
        k_min=0.0, k_max=0.05, z_min=0.35, z_max=0.75,
        g_coeff=0.0, g_exponent=3.0,
    )


def appendix_params() -> ModelParams:
    """Storage-cost variant: wider storage range, cubic holding cost."""
    return baseline_params().with_(k_max=0.07, g_coeff=10.0)


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid2D:
    """Uniform lattice on [k_min, k_max] x [z_min, z_max].

    N and M are the number of intervals; there are (N+1)*(M+1) nodes and
    the endpoints are hit exactly.
    """

    N: int
    M: int
    dk: float
    dz: float
    k: np.ndarray = field(repr=False)   # (N+1,)
    z: np.ndarray = field(repr=False)   # (M+1,)

    def __post_init__(self):
        if self.dk <= 0 or self.dz <= 0:
            raise ValueError("grid spacings must be positive")
        self.k.setflags(write=False)
        self.z.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N + 1, self.M + 1)


def make_grid(params: ModelParams, N: int, M: int) -> Grid2D:
    if N < 2 or M < 2:
        raise ValueError("need at least 2 intervals per direction")
    k = np.linspace(params.k_min, params.k_max, N + 1)
    z = np.linspace(params.z_min, params.z_max, M + 1)
    return Grid2D(N=N, M=M, dk=(params.k_max - params.k_min) / N,
                  dz=(params.z_max - params.z_min) / M, k=k, z=z)


@dataclass(frozen=True)
class Grid1D:
    """Uniform lattice on [k_min, k_max] for the constant-fringe variant."""

    N: int
    dk: float
    k: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dk <= 0:
            raise ValueError("grid spacing must be positive")
        self.k.setflags(write=False)


def make_grid_1d(params: ModelParams, N: int) -> Grid1D:
    if N < 2:
        raise ValueError("need at least 2 intervals")
    k = np.linspace(params.k_min, params.k_max, N + 1)
    return Grid1D(N=N, dk=(params.k_max - params.k_min) / N, k=k)


# ---------------------------------------------------------------------------
# Solution containers
# ---------------------------------------------------------------------------

@dataclass
class FieldPair:
    """Value field U and price field P sampled at grid nodes, shape (N+1, M+1).

    Treated as immutable value data once produced by a solver; copy before
    mutating.
    """

    U: np.ndarray
    P: np.ndarray

    def copy(self) -> "FieldPair":
        return FieldPair(self.U.copy(), self.P.copy())

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.U).all() and np.isfinite(self.P).all())


@dataclass
class PolicyFields:
    """Fields derived from a solved (U, P) pair.

    q_star   : optimal cartel production at each node
    drift_k  : storage drift q* + z - D(p)
    drift_z  : fringe drift b(k, z, p)
    shock_j  : per k-column, z-cell index of the largest jump of q* in z
    shock_z  : z-coordinate (cell midpoint) of that jump
    shock_jump : magnitude of that jump
    """

    q_star: np.ndarray
    drift_k: np.ndarray
    drift_z: np.ndarray
    shock_j: np.ndarray
    shock_z: np.ndarray
    shock_jump: np.ndarray


# ---------------------------------------------------------------------------
# Coefficient functions (scalar or ndarray arguments)
# ---------------------------------------------------------------------------

def demand(p, params: ModelParams):
    """Linear demand D(p) = 1 - epsilon*p, not clamped at zero.

    In the operating regime p stays below 1/epsilon, so negative demand never
    occurs along equilibrium paths.
    """
    return 1.0 - params.epsilon * p


def f_storage(k, params: ModelParams):
    """Quadratic modulation of the fringe drift near the storage bounds.

    Equals +a_f at k_min and -a_f at k_max, odd about the midpoint. It proxies
    the lag between fringe investment decisions and new capacity coming online.
    """
    rng = params.k_max - params.k_min
    if np.any(np.asarray(k) < params.k_min) or np.any(np.asarray(k) > params.k_max):
        raise ValueError("f_storage: k outside [k_min, k_max]")
    up = (params.k_max - k) / rng
    dn = (k - params.k_min) / rng
    return params.a_f * (up * up - dn * dn)


def b_tilde(z, params: ModelParams):
    """Technical inward forcing supported within b_tilde_width of the z bounds.

    Positive near z_min, negative near z_max, zero elsewhere; keeps the fringe
    state inside the computational box and does not affect the interior.
    """
    w = params.b_tilde_width
    lo = np.maximum((params.z_min + w - z) / w, 0.0)
    hi = np.maximum((z - params.z_max + w) / w, 0.0)
    return params.b_tilde_amp * (lo * lo - hi * hi)


def drift_b(k, z, p, params: ModelParams):
    """Fringe-production drift f(k) + kappa*(lambda*p - mu) + b_tilde(z)."""
    return (f_storage(k, params)
            + params.kappa * (params.lambda_b * p - params.mu_b)
            + b_tilde(z, params))


def storage_cost(k, params: ModelParams):
    """Holding cost g(k) = g_coeff * ((k - k_min)/(k_max - k_min))**g_exponent."""
    if params.g_coeff == 0.0:
        return np.zeros_like(np.asarray(k, dtype=float)) if np.ndim(k) else 0.0
    rel = (k - params.k_min) / (params.k_max - params.k_min)
    return params.g_coeff * rel ** params.g_exponent


def sigma_vol(k, params: ModelParams):
    """Storage volatility sigma(k). Only the identically-zero spec is supported;
    the scheme keeps the diffusion terms so a nonzero spec can be added later."""
    return np.zeros_like(np.asarray(k, dtype=float)) if np.ndim(k) else 0.0
