"""Dense matrix-equation solvers for small systems.

All routines take and return plain ``numpy`` arrays. The symmetric solver
diagonalizes ``A`` once; the general solver vectorizes the equation with
Kronecker products, which is adequate for n <= 8.
"""
import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPositiveDefinite, NotStable

MAX_GENERAL_DIM = 8
PD_RTOL = 1e-10
STABLE_TOL = 1e-12


def as_square(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def as_sym(A, name="A", atol=1e-12):
    """Validate symmetry and return the exactly symmetrized array."""
    A = as_square(A, name)
    scale = max(1.0, np.abs(A).max(initial=0.0))
    if np.abs(A - A.T).max(initial=0.0) > atol * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (A + A.T)


def as_skew(A, name="A", atol=1e-12):
    A = as_square(A, name)
    scale = max(1.0, np.abs(A).max(initial=0.0))
    if np.abs(A + A.T).max(initial=0.0) > atol * scale:
        raise ValueError(f"{name} is not skew-symmetric")
    return 0.5 * (A - A.T)


def sym_part(A):
    return 0.5 * (A + A.T)


def skew_part(A):
    return 0.5 * (A - A.T)


def check_positive_definite(A, name="A", rtol=PD_RTOL):
    """Return eigenpairs of symmetric ``A`` or raise if it is not safely PD."""
    lam, V = np.linalg.eigh(A)
    lam_max = lam[-1]
    if lam_max <= 0 or lam[0] <= rtol * lam_max:
        raise NotPositiveDefinite(
            f"{name} is not positive definite (eigenvalues {lam[0]:.3e} .. {lam_max:.3e})"
        )
    return lam, V


def _match(A, Q):
    if A.shape != Q.shape:
        raise DimensionMismatch(f"shapes {A.shape} and {Q.shape} do not match")


def solve_lyapunov_sym(A, Q):
    """Solve ``A Y + Y A = Q`` for symmetric positive-definite ``A``.

    With ``A = V diag(lam) V^T`` the solution is
    ``Y = V [(V^T Q V)_ij / (lam_i + lam_j)] V^T``. ``Q`` may be symmetric or
    skew-symmetric; the solution inherits the same symmetry.

    Raises
    ------
    NotPositiveDefinite
        If ``lam_min <= 1e-10 * lam_max``.
    DimensionMismatch
        If ``A`` and ``Q`` have different shapes.
    """
    A = as_sym(A, "A")
    Q = as_square(Q, "Q")
    _match(A, Q)
    lam, V = check_positive_definite(A, "A")
    Qt = V.T @ Q @ V
    Yt = Qt / (lam[:, None] + lam[None, :])
    Y = V @ Yt @ V.T
    if np.allclose(Q, Q.T, rtol=0, atol=1e-14 * max(1.0, np.abs(Q).max())):
        Y = sym_part(Y)
    elif np.allclose(Q, -Q.T, rtol=0, atol=1e-14 * max(1.0, np.abs(Q).max())):
        Y = skew_part(Y)
    return Y


def kron_lyapunov_matrix(A):
    """Matrix of ``Y -> A Y + Y A^T`` acting on row-major ``vec(Y)``."""
    n = A.shape[0]
    eye = np.eye(n)
    return np.kron(A, eye) + np.kron(eye, A)


def solve_lyapunov_general(A, Q):
    """Solve ``A Y + Y A^T = Q`` where every eigenvalue of ``A`` has positive real part.

    The drift of the associated linear SDE is ``-A``. Solved by dense
    Kronecker vectorization, so ``n`` is capped at 8.
    """
    A = as_square(A, "A")
    Q = as_sym(Q, "Q")
    _match(A, Q)
    n = A.shape[0]
    if n > MAX_GENERAL_DIM:
        raise DimensionMismatch(f"general Lyapunov solver supports n <= {MAX_GENERAL_DIM}, got {n}")
    ev = np.linalg.eigvals(A)
    scale = max(1.0, np.abs(ev).max())
    if ev.real.min() <= STABLE_TOL * scale:
        raise NotStable(f"A has an eigenvalue with real part {ev.real.min():.3e} <= 0")
    y = np.linalg.solve(kron_lyapunov_matrix(A), Q.reshape(-1))
    return sym_part(y.reshape(n, n))


def commutator(A, B):
    A = as_square(A, "A")
    B = as_square(B, "B")
    _match(A, B)
    return A @ B - B @ A


def matrix_exponential(A, t=1.0):
    """Return ``exp(t A)`` (scaling and squaring with Pade approximants)."""
    A = as_square(A, "A")
    return scipy.linalg.expm(t * A)


def residual_norm(A, Y, Q):
    """Frobenius norm of ``A Y + Y A^T - Q``."""
    return float(np.linalg.norm(A @ Y + Y @ A.T - Q))
