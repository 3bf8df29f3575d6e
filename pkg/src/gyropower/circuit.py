"""Two-capacitor RC network driven by Johnson-Nyquist noise.

Charges ``q`` on the capacitors obey

    dq = -(1/R) C_hat^{-1} q dt + sqrt(2 k_B T / R) dB,   C_hat = C + C_nr,

so the network is a linear gyrator with friction ``R`` and, when
``C_nr = 0``, stiffness ``C^{-1}``. A non-reciprocal capacitance ``C_nr``
splits the drift into a conservative part ``C_hat^{-T} C C_hat^{-1}`` and a
non-conservative part ``N = C_hat^{-T} C_nr^T C_hat^{-1}``.

Two power evaluations are provided. ``covariance="load_free"`` (default)
assumes the non-reciprocal element leaves the load-free covariance
``Sigma`` of ``(C, T)`` in place and identifies the skew load as
``N Sigma``. ``covariance="realized"`` uses the actual stationary
covariance of the drift ``C_hat^{-1}`` instead, and refuses specs whose load
does not preserve it.
"""
from dataclasses import dataclass, field

import numpy as np

from . import gyrator, matcore
from .errors import NoConvergence, NotPositiveDefinite, NotSkewRealizable, NotStable

SKEW_TOL = 1e-8


def capacitance_matrix(C1, C2, Cc):
    C = np.array([[C1 + Cc, -Cc], [-Cc, C2 + Cc]], dtype=float)
    if np.linalg.eigvalsh(C)[0] <= 0:
        raise NotPositiveDefinite("capacitance matrix is not positive definite")
    return C


@dataclass(frozen=True, eq=False)
class CircuitSpec:
    C1: float
    C2: float
    Cc: float
    R: float
    T1: float
    T2: float
    C_nr: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    k_B: float = 1.0

    def __post_init__(self):
        for name in ("C1", "C2", "R", "T1", "T2", "k_B"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.Cc >= 0:
            raise ValueError("Cc must be non-negative")
        C_nr = np.asarray(self.C_nr, dtype=float)
        if C_nr.shape != (2, 2):
            raise matcore.DimensionMismatch("C_nr must be 2x2")
        object.__setattr__(self, "C_nr", C_nr)
        capacitance_matrix(self.C1, self.C2, self.Cc)
        if abs(np.linalg.det(self.C_hat)) < 1e-14:
            raise NotStable("C + C_nr is singular")

    @property
    def C(self):
        return capacitance_matrix(self.C1, self.C2, self.Cc)

    @property
    def C_hat(self):
        return self.C + self.C_nr

    @property
    def T(self):
        return np.diag([self.T1, self.T2])

    @property
    def params(self):
        return gyrator.ModelParams(k_B=self.k_B, gamma=self.R)

    def with_cnr(self, C_nr):
        return CircuitSpec(self.C1, self.C2, self.Cc, self.R, self.T1, self.T2, C_nr, self.k_B)


@dataclass(frozen=True, eq=False)
class ChargeLangevin:
    """Charge dynamics ``dq = -(1/R) drift q dt + noise`` of a circuit."""

    drift: np.ndarray
    stiffness: np.ndarray
    nonconservative: np.ndarray
    T: np.ndarray
    params: gyrator.ModelParams

    def as_gyrator(self):
        """Load-free gyrator with the conservative stiffness."""
        return gyrator.LinearGyratorModel(self.stiffness, self.T, self.params)


@dataclass(frozen=True, eq=False)
class VoltageFields:
    conservative_coeff: np.ndarray
    nonconservative_coeff: np.ndarray
    source_coeff: np.ndarray
    load_coeff: np.ndarray
    implied_omega: np.ndarray


def _split(spec):
    Chi = np.linalg.inv(spec.C_hat)
    cons = Chi.T @ spec.C @ Chi
    noncons = Chi.T @ spec.C_nr.T @ Chi
    return Chi, matcore.sym_part(cons), noncons


def circuit_to_langevin(spec):
    Chi, cons, noncons = _split(spec)
    ev = np.linalg.eigvals(Chi)
    if ev.real.min() <= 0:
        raise NotStable("drift C_hat^{-1} is not stable")
    return ChargeLangevin(drift=Chi, stiffness=cons, nonconservative=noncons,
                          T=spec.T, params=spec.params)


def load_free_covariance(spec):
    """Stationary covariance of ``(C, T)`` with ``C_nr`` removed."""
    return matcore.solve_lyapunov_sym(np.linalg.inv(spec.C), 2.0 * spec.k_B * spec.T)


def circuit_steady_state(spec):
    """Stationary charge covariance: ``C_hat^{-1} S + S C_hat^{-T} = 2 k_B T``."""
    Chi = np.linalg.inv(spec.C_hat)
    return matcore.solve_lyapunov_general(Chi, 2.0 * spec.k_B * spec.T)


def force_decomposition(spec, sigma_ss=None):
    """Split ``-C_hat^{-1}`` into conservative and non-conservative voltage fields.

    ``V_S = (-C_hat^{-T} C C_hat^{-1} + k_B T S) q`` and
    ``V_L = -C_hat^{-T} C_nr^T C_hat^{-1} q`` with ``S = Sigma^{-1}``; ``Sigma``
    defaults to the load-free covariance.
    """
    _, cons, noncons = _split(spec)
    sigma = load_free_covariance(spec) if sigma_ss is None else sigma_ss
    S = np.linalg.inv(sigma)
    return VoltageFields(
        conservative_coeff=-cons,
        nonconservative_coeff=-noncons,
        source_coeff=-cons + spec.k_B * spec.T @ S,
        load_coeff=-noncons,
        implied_omega=noncons @ sigma,
    )


def design_cnr(C, R, T, omega_target, params=None, damping=0.5, max_iter=500, tol=1e-9):
    """Non-reciprocal capacitance whose non-conservative drift is ``Omega S``.

    Iterates ``C_hat <- (1-d) C_hat + d (C + [C_hat^T Omega S C_hat]^T)`` from
    ``C_hat = C`` where ``S`` is the inverse load-free covariance of ``(C, T)``.

    Returns
    -------
    CircuitSpec
        With ``C1, C2, Cc`` recovered from ``C``.

    Raises
    ------
    NoConvergence
        After ``max_iter`` iterations without reaching ``tol``.
    """
    k_B = 1.0 if params is None else params.k_B
    C = matcore.as_sym(C, "C")
    T = np.asarray(T, dtype=float)
    if T.ndim == 1:
        T = np.diag(T)
    omega = matcore.as_skew(omega_target, "omega_target")
    sigma = matcore.solve_lyapunov_sym(np.linalg.inv(C), 2.0 * k_B * T)
    target = omega @ np.linalg.inv(sigma)
    Cc = -C[0, 1]
    base = dict(C1=C[0, 0] - Cc, C2=C[1, 1] - Cc, Cc=Cc, R=R, T1=T[0, 0], T2=T[1, 1], k_B=k_B)

    C_hat = C.copy()
    res = np.inf
    scale = max(1.0, np.linalg.norm(target))
    blowup = 1e8 * np.linalg.norm(C)
    it = 0
    for it in range(max_iter + 1):
        C_nr = C_hat - C
        Chi = np.linalg.inv(C_hat)
        res = float(np.linalg.norm(Chi.T @ C_nr.T @ Chi - target) / scale)
        if res <= tol:
            return CircuitSpec(C_nr=C_nr, **base)
        if it == max_iter:
            break
        nxt = (1 - damping) * C_hat + damping * (C + (C_hat.T @ target @ C_hat).T)
        if not np.linalg.norm(nxt) < blowup:
            break
        C_hat = nxt
    raise NoConvergence(f"design_cnr stopped after {it} iterations with residual {res:.3e}",
                        residual=res, iterations=it)


def circuit_power(spec, covariance="load_free"):
    """Steady-state power drawn through the non-reciprocal capacitance.

    The non-conservative drift ``N`` and covariance ``Sigma`` map to the skew
    load ``Omega = N Sigma`` of a gyrator with friction ``R``; the power is
    ``gyrator.power_of_load(Omega, Sigma, T)``.
    """
    _, _, noncons = _split(spec)
    if covariance == "load_free":
        sigma = load_free_covariance(spec)
    elif covariance == "realized":
        sigma = circuit_steady_state(spec)
    else:
        raise ValueError(f"unknown covariance mode {covariance!r}")
    omega = noncons @ sigma
    sym = np.linalg.norm(matcore.sym_part(omega))
    if sym > SKEW_TOL * max(1.0, np.linalg.norm(omega)):
        raise NotSkewRealizable(
            f"implied load has symmetric part {sym:.3e}; C_nr does not preserve the covariance")
    return gyrator.power_of_load(matcore.skew_part(omega), sigma, spec.T, spec.params)


def premise_gap(spec):
    """How far the realized circuit departs from the load-free description.

    Returns the Frobenius norms of ``Sigma_realized - Sigma_load_free`` and of
    the conservative stiffness minus ``C^{-1}``.
    """
    _, cons, _ = _split(spec)
    return {
        "covariance": float(np.linalg.norm(circuit_steady_state(spec) - load_free_covariance(spec))),
        "stiffness": float(np.linalg.norm(cons - np.linalg.inv(spec.C))),
    }
