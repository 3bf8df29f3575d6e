"""Steady states of the linear gyrator and the power-maximizing skew load.

The model is the overdamped linear system

    dX = (1/gamma) (Omega Sigma^{-1} - K_c) X dt + sqrt(2 k_B T / gamma) dB

with diagonal bath temperatures ``T``, stiffness ``K_c`` and an optional
skew-symmetric load ``Omega``. The load force acting against the particle is
``f_L = -Omega Sigma^{-1} x``; the source force is
``f_S = (-K_c + k_B T Sigma^{-1}) x``.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from . import matcore
from .errors import InconsistentSteadyState, SolverSingular

DB_RTOL = 1e-10


@dataclass(frozen=True)
class ModelParams:
    k_B: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not (self.k_B > 0 and np.isfinite(self.k_B)):
            raise ValueError(f"k_B must be positive, got {self.k_B}")
        if not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True, eq=False)
class LinearGyratorModel:
    """Quadratic trap ``U = x^T K_c x / 2`` coupled to baths at temperatures ``T``.

    ``T`` may be given as the vector of bath temperatures or as the diagonal
    matrix; it is stored as a matrix.
    """

    K_c: np.ndarray
    T: np.ndarray
    params: ModelParams = field(default_factory=ModelParams)
    omega: np.ndarray | None = None

    def __post_init__(self):
        K = matcore.as_sym(self.K_c, "K_c")
        matcore.check_positive_definite(K, "K_c")
        T = np.asarray(self.T, dtype=float)
        if T.ndim == 1:
            T = np.diag(T)
        T = matcore.as_square(T, "T")
        if np.any(T - np.diag(np.diag(T))):
            raise ValueError("T must be diagonal")
        if np.any(np.diag(T) <= 0):
            raise ValueError("bath temperatures must be positive")
        if T.shape != K.shape:
            raise matcore.DimensionMismatch(f"T has shape {T.shape}, K_c has {K.shape}")
        object.__setattr__(self, "K_c", K)
        object.__setattr__(self, "T", T)
        if self.omega is not None:
            om = matcore.as_skew(self.omega, "omega")
            if om.shape != K.shape:
                raise matcore.DimensionMismatch("omega and K_c differ in shape")
            object.__setattr__(self, "omega", om)

    @property
    def n(self):
        return self.K_c.shape[0]

    @property
    def temperatures(self):
        return np.diag(self.T).copy()

    def with_load(self, omega):
        return replace(self, omega=omega)

    @property
    def load(self):
        return np.zeros_like(self.K_c) if self.omega is None else self.omega


@dataclass(frozen=True, eq=False)
class SteadyStateReport:
    sigma_ss: np.ndarray
    omega_star: np.ndarray
    p_star: float
    velocity_coeff: np.ndarray
    detailed_balance: bool
    commutator_norm: float
    lyapunov_residual: float = 0.0
    omega_residual: float = 0.0


def steady_state_covariance(model):
    """Solve ``K_c Sigma + Sigma K_c = 2 k_B T``.

    A skew load does not enter this equation, so ``model.omega`` is ignored.
    """
    return matcore.solve_lyapunov_sym(model.K_c, 2.0 * model.params.k_B * model.T)


def velocity_coefficient(K_c, sigma_ss, params, T=None):
    """Coefficient ``A_v`` of the mean velocity ``v(x) = A_v x`` with no load.

    ``A_v = -(1/2 gamma) [K_c, Sigma] Sigma^{-1}``. The commutator form relies on
    ``sigma_ss`` solving the Lyapunov equation; pass ``T`` to have that checked.
    """
    K_c = np.asarray(K_c, dtype=float)
    S = np.asarray(sigma_ss, dtype=float)
    if T is not None:
        T = np.asarray(T, dtype=float)
        if T.ndim == 1:
            T = np.diag(T)
        rhs = 2.0 * params.k_B * T
        res = matcore.residual_norm(K_c, S, rhs)
        if res > 1e-8 * max(1.0, np.linalg.norm(rhs)):
            raise InconsistentSteadyState(f"Lyapunov residual {res:.3e} exceeds 1e-8")
    C = matcore.commutator(K_c, S)
    return -np.linalg.solve(S.T, C.T).T / (2.0 * params.gamma)


def detailed_balance_check(model):
    C = matcore.commutator(model.K_c, model.T)
    norm = float(np.linalg.norm(C))
    scale = np.linalg.norm(model.K_c) * np.linalg.norm(model.T)
    return bool(norm <= DB_RTOL * scale), norm


def _skew_basis(n):
    basis = []
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n))
            E[i, j], E[j, i] = 1.0, -1.0
            basis.append(E)
    return basis


def skew_operator_matrix(S):
    """Matrix of ``Omega -> S Omega + Omega S`` restricted to skew ``Omega``."""
    basis = _skew_basis(S.shape[0])
    iu = np.triu_indices(S.shape[0], 1)
    return np.array([(S @ E + E @ S)[iu] for E in basis]).T


def optimal_skew(sigma_ss, T, params):
    """Skew load maximizing steady-state power.

    Solves ``S Omega + Omega S = (k_B/2)(S T - T S)`` with ``S = Sigma^{-1}``.
    Uniqueness within the skew subspace is confirmed from the singular values
    of the restricted operator before solving.
    """
    S = np.linalg.inv(matcore.as_sym(sigma_ss, "sigma_ss"))
    S = matcore.sym_part(S)
    T = np.asarray(T, dtype=float)
    if T.ndim == 1:
        T = np.diag(T)
    n = S.shape[0]
    if n > 1:
        sv = np.linalg.svd(skew_operator_matrix(S), compute_uv=False)
        if sv.min() <= 1e-12 * sv.max():
            raise SolverSingular("skew load equation is not uniquely solvable")
    rhs = 0.5 * params.k_B * (S @ T - T @ S)
    return matcore.skew_part(matcore.solve_lyapunov_sym(S, rhs))


def power_of_load(omega, sigma_ss, T, params):
    """Steady-state power extracted by the skew load ``omega``.

    ``P = -(1/gamma) Tr[Omega S Omega^T + k_B Omega S T]`` with ``S = Sigma^{-1}``.
    """
    omega = np.asarray(omega, dtype=float)
    T = np.asarray(T, dtype=float)
    if T.ndim == 1:
        T = np.diag(T)
    S = np.linalg.inv(np.asarray(sigma_ss, dtype=float))
    W = omega @ S
    return float(-(np.trace(W @ omega.T) + params.k_B * np.trace(W @ T)) / params.gamma)


def source_coefficient(model, sigma_ss=None):
    """``B`` with ``f_S(x) = B x = (-K_c + k_B T Sigma^{-1}) x``."""
    S = steady_state_covariance(model) if sigma_ss is None else sigma_ss
    return -model.K_c + model.params.k_B * model.T @ np.linalg.inv(S)


def max_power(model):
    sigma = steady_state_covariance(model)
    db, cnorm = detailed_balance_check(model)
    T, p = model.T, model.params
    if db:
        omega = np.zeros_like(sigma)
    else:
        omega = optimal_skew(sigma, T, p)
    S = np.linalg.inv(sigma)
    # P* = (k_B / 2 gamma) Tr[T S Omega*]
    p_star = float(p.k_B * np.trace(T @ S @ omega) / (2.0 * p.gamma))
    if db:
        p_star = 0.0
    rhs = 0.5 * p.k_B * (S @ T - T @ S)
    return SteadyStateReport(
        sigma_ss=sigma,
        omega_star=omega,
        p_star=p_star,
        velocity_coeff=velocity_coefficient(model.K_c, sigma, p, T),
        detailed_balance=db,
        commutator_norm=cnorm,
        lyapunov_residual=matcore.residual_norm(model.K_c, sigma, 2.0 * p.k_B * T),
        omega_residual=float(np.linalg.norm(S @ omega + omega @ S - rhs)),
    )


def load_sweep(model, alphas, report=None):
    """Power of the loads ``2 alpha Omega*``, i.e. ``f_L = alpha f_S``."""
    report = max_power(model) if report is None else report
    out = []
    for a in alphas:
        a = float(a)
        if a == 0.0:
            P = 0.0
        else:
            P = power_of_load(2.0 * a * report.omega_star, report.sigma_ss, model.T, model.params)
            if a == 1.0:
                # f_L == f_S: the integrand f_L^T (f_S - f_L) vanishes identically
                P = 0.0
        out.append((a, P))
    return out


def matching_residual(model, report=None):
    """``||K_c - 2 Omega* S - k_B T S||_F``; zero when ``f_S = -2 Omega* S x``."""
    report = max_power(model) if report is None else report
    S = np.linalg.inv(report.sigma_ss)
    M = 2.0 * report.omega_star @ S + model.params.k_B * model.T @ S
    return float(np.linalg.norm(model.K_c - M))


def heat_rates(model, sigma_ss=None):
    """Mean heat uptake rate from each bath at steady state.

    For drift ``-(1/gamma) G x`` with ``G = K_c - Omega S`` the midpoint
    rule gives ``Qdot_i = (1/gamma)[k_B T_i G_ii - (G Sigma G^T)_ii]``.
    """
    S = steady_state_covariance(model) if sigma_ss is None else sigma_ss
    G = model.K_c - model.load @ np.linalg.inv(S)
    p = model.params
    return (p.k_B * np.diag(model.T) * np.diag(G) - np.diag(G @ S @ G.T)) / p.gamma
