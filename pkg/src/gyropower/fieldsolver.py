"""Grid solver for the nonlinear setting in two dimensions.

Given a target stationary density ``rho`` on a box, recover the confining
potential ``U_c`` from

    div(rho grad U_c) = -div(rho k_B T grad log rho)

(zero normal flux, rho-weighted zero mean), form the source force
``f_S = -grad U_c - k_B T grad log rho``, halve it to get the optimal load,
and evaluate the extracted power by direct quadrature and by the
dissipative/quasi-static heat decomposition.

Nodes sit on a tensor grid; the boundary nodes own half cells, so the
finite-volume weights coincide with the trapezoidal rule.
"""
import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import matcore
from .errors import DomainTooSmall, SolverSingular

MIN_POINTS = 16
BOUNDARY_MASS_TOL = 1e-10


@dataclass(frozen=True)
class Grid2D:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < MIN_POINTS or self.ny < MIN_POINTS:
            raise ValueError(f"grid needs at least {MIN_POINTS} points per axis")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("empty domain")

    @classmethod
    def centered(cls, half_x, half_y, nx, ny=None):
        ny = nx if ny is None else ny
        return cls(-half_x, half_x, -half_y, half_y, nx, ny)

    @property
    def h_x(self):
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def h_y(self):
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def y(self):
        return np.linspace(self.y_min, self.y_max, self.ny)

    def mesh(self):
        """Coordinate arrays of shape (nx, ny), ``indexing='ij'``."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def weights(self):
        """Trapezoidal quadrature weights (also the control-volume areas)."""
        wx = np.full(self.nx, self.h_x)
        wx[[0, -1]] *= 0.5
        wy = np.full(self.ny, self.h_y)
        wy[[0, -1]] *= 0.5
        return np.outer(wx, wy)

    def integrate(self, values):
        return float(np.sum(self.weights() * values))

    def gradient(self, values):
        """Central differences inside, second-order one-sided at the edges."""
        gx, gy = np.gradient(values, self.h_x, self.h_y, edge_order=2)
        return np.stack([gx, gy], axis=-1)

    def divergence(self, vec):
        dx = np.gradient(vec[..., 0], self.h_x, axis=0, edge_order=2)
        dy = np.gradient(vec[..., 1], self.h_y, axis=1, edge_order=2)
        return dx + dy


@dataclass(frozen=True, eq=False)
class GridDensity:
    grid: Grid2D
    values: np.ndarray
    normalization: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.nx, self.grid.ny):
            raise matcore.DimensionMismatch("density shape does not match grid")
        if not np.all(v > 0) or not np.all(np.isfinite(v)):
            raise ValueError("density must be positive and finite everywhere")
        object.__setattr__(self, "values", v)

    @property
    def mass(self):
        return self.grid.integrate(self.values)

    def boundary_mass(self):
        """Quadrature mass carried by the outermost ring of control volumes."""
        w = self.grid.weights() * self.values
        inner = w[1:-1, 1:-1].sum()
        return float(w.sum() - inner)

    def mean(self, values):
        return self.grid.integrate(self.values * values)


@dataclass(frozen=True, eq=False)
class GridScalarField:
    grid: Grid2D
    values: np.ndarray
    gauge: str = "none"
    residual: float = 0.0


@dataclass(frozen=True, eq=False)
class GridVectorField:
    grid: Grid2D
    values: np.ndarray  # shape (nx, ny, 2)

    def __mul__(self, c):
        return GridVectorField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other):
        return GridVectorField(self.grid, self.values + other.values)


def _check_grid(a, b):
    if a != b:
        raise matcore.DimensionMismatch("fields live on different grids")


def gaussian_density(grid, sigma):
    """Zero-mean Gaussian with covariance ``sigma``, renormalized on the grid.

    Raises DomainTooSmall if more than 1e-10 of the mass sits in the
    boundary control volumes.
    """
    sigma = matcore.as_sym(sigma, "sigma")
    if sigma.shape != (2, 2):
        raise matcore.DimensionMismatch("grid densities are two-dimensional")
    matcore.check_positive_definite(sigma, "sigma")
    X, Y = grid.mesh()
    P = np.linalg.inv(sigma)
    q = P[0, 0] * X * X + 2 * P[0, 1] * X * Y + P[1, 1] * Y * Y
    vals = np.exp(-0.5 * q) / (2 * np.pi * np.sqrt(np.linalg.det(sigma)))
    vals = np.maximum(vals, np.finfo(float).tiny)
    raw = GridDensity(grid, vals)
    bm = raw.boundary_mass()
    if bm > BOUNDARY_MASS_TOL:
        raise DomainTooSmall(f"boundary carries mass {bm:.2e} > {BOUNDARY_MASS_TOL:g}; enlarge the box")
    mass = raw.mass
    return GridDensity(grid, vals / mass, normalization=1.0 / mass)


def _face_mean(a, b, kind):
    if kind == "geometric":
        return np.sqrt(a * b)
    if kind == "harmonic":
        return 2 * a * b / (a + b)
    raise ValueError(f"unknown face mean {kind!r}")


def _face_weights(rho, grid, face_mean="geometric"):
    """Face densities times face length over node spacing.

    Any symmetric two-point mean keeps the operator self-adjoint. The
    geometric mean equals ``exp`` of the averaged ``log rho`` and pairs with
    the ``dlog rho`` fluxes; the harmonic mean is kept for comparison.
    """
    g = grid
    rx = _face_mean(rho[1:, :], rho[:-1, :], face_mean)
    ry = _face_mean(rho[:, 1:], rho[:, :-1], face_mean)
    ly = np.full(g.ny, g.h_y)
    ly[[0, -1]] *= 0.5
    lx = np.full(g.nx, g.h_x)
    lx[[0, -1]] *= 0.5
    return rx * ly[None, :] / g.h_x, ry * lx[:, None] / g.h_y


def weighted_laplacian(rho, grid, face_mean="geometric"):
    """Symmetric matrix of ``u -> -sum over faces w_f (u_nb - u)`` (graph Laplacian)."""
    wx, wy = _face_weights(rho, grid, face_mean)
    nx, ny = grid.nx, grid.ny
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []
    for a, b, w in ((idx[:-1, :], idx[1:, :], wx), (idx[:, :-1], idx[:, 1:], wy)):
        a, b, w = a.ravel(), b.ravel(), w.ravel()
        rows += [a, b, a, b]
        cols += [a, b, b, a]
        vals += [w, w, -w, -w]
    L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nx * ny, nx * ny))
    return L


def solve_confining_potential(rho, T, params, face_mean="geometric"):
    """Potential ``U_c`` that makes ``rho`` stationary under temperatures ``T``.

    Face fluxes are ``w_f (dU + k_B T_d dlog rho)``, so the discrete operator
    is the same weighted Laplacian on both sides and, for isotropic ``T``,
    ``U_c = -k_B T log rho`` is reproduced exactly. The gauge is fixed by
    pinning one node (leaving an SPD system) and shifting to rho-weighted
    zero mean afterwards.
    """
    grid = rho.grid
    T = np.asarray(T, dtype=float)
    temps = np.diag(T) if T.ndim == 2 else T
    logr = np.log(rho.values)
    wx, wy = _face_weights(rho.values, grid, face_mean)
    nx, ny = grid.nx, grid.ny
    L = weighted_laplacian(rho.values, grid, face_mean)
    # rhs = div of the k_B T grad log rho fluxes, with the Laplacian's sign
    fx = params.k_B * temps[0] * wx * (logr[1:, :] - logr[:-1, :])
    fy = params.k_B * temps[1] * wy * (logr[:, 1:] - logr[:, :-1])
    b = np.zeros((nx, ny))
    b[:-1, :] += fx
    b[1:, :] -= fx
    b[:, :-1] += fy
    b[:, 1:] -= fy
    b = b.ravel()
    # L u = b  <=>  sum_f w_f (du + k_B T dlog rho) = 0 at every node
    pin = int(np.argmax(rho.values))
    keep = np.ones(nx * ny, dtype=bool)
    keep[pin] = False
    Lr = L[keep][:, keep].tocsc()
    try:
        lu = spla.splu(Lr)
    except RuntimeError as exc:
        raise SolverSingular(f"gauge-fixed operator is singular: {exc}") from exc
    u = np.zeros(nx * ny)
    u[keep] = lu.solve(b[keep])
    if not np.all(np.isfinite(u)):
        raise SolverSingular("non-finite potential; operator is numerically singular")
    res = np.linalg.norm(L @ u - b) / max(1.0, np.linalg.norm(b))
    U = u.reshape(nx, ny)
    U = U - rho.mean(U) / rho.mass
    return GridScalarField(grid, U, gauge="rho-mean-zero", residual=float(res))


def log_density_gradient(rho):
    return rho.grid.gradient(np.log(rho.values))


def source_force_field(rho, U_c, T, params):
    """``f_S = -grad U_c - k_B T grad log rho`` on the nodes."""
    _check_grid(rho.grid, U_c.grid)
    T = np.asarray(T, dtype=float)
    temps = np.diag(T) if T.ndim == 2 else T
    gU = rho.grid.gradient(U_c.values)
    gl = log_density_gradient(rho)
    return GridVectorField(rho.grid, -gU - params.k_B * temps * gl)


def optimal_load_field(f_S):
    return GridVectorField(f_S.grid, 0.5 * f_S.values)


def power_quadrature(f_L, f_S, rho, params):
    """Trapezoidal value of ``int f_L . (f_S - f_L) rho / gamma``."""
    _check_grid(f_L.grid, f_S.grid)
    _check_grid(f_L.grid, rho.grid)
    integrand = np.einsum("ijk,ijk->ij", f_L.values, f_S.values - f_L.values)
    return rho.grid.integrate(integrand * rho.values) / params.gamma


def power_heat_decomposition(v, rho, T, params):
    """``-gamma int |v|^2 rho - k_B int v . T grad log rho rho`` for a mean velocity ``v``."""
    _check_grid(v.grid, rho.grid)
    T = np.asarray(T, dtype=float)
    temps = np.diag(T) if T.ndim == 2 else T
    gl = log_density_gradient(rho)
    dissipative = -params.gamma * rho.grid.integrate(np.sum(v.values ** 2, axis=-1) * rho.values)
    quasi_static = -params.k_B * rho.grid.integrate(np.sum(v.values * temps * gl, axis=-1) * rho.values)
    return dissipative + quasi_static


def divergence_residual(f, rho):
    """Discrete L2 norm of ``div(f rho)``."""
    _check_grid(f.grid, rho.grid)
    d = rho.grid.divergence(f.values * rho.values[..., None])
    return float(np.sqrt(rho.grid.integrate(d * d)))


def weighted_l2(values, rho):
    return float(np.sqrt(rho.mean(values * values) / rho.mass))


def stream_perturbation(rho, phi):
    """Field ``rho^{-1} curl(rho phi)``, divergence-free with respect to ``rho``.

    Expanded as ``curl phi + phi (d_y log rho, -d_x log rho)`` to avoid
    dividing by the tiny tail densities.
    """
    g = rho.grid
    gp = g.gradient(phi)
    gl = log_density_gradient(rho)
    vx = gp[..., 1] + phi * gl[..., 1]
    vy = -gp[..., 0] - phi * gl[..., 0]
    return GridVectorField(g, np.stack([vx, vy], axis=-1))


def linear_field(grid, B):
    """Nodal values of ``x -> B x``."""
    X, Y = grid.mesh()
    B = np.asarray(B, dtype=float)
    return GridVectorField(grid, np.stack([B[0, 0] * X + B[0, 1] * Y, B[1, 0] * X + B[1, 1] * Y], -1))


def quadratic_potential(grid, K):
    X, Y = grid.mesh()
    return 0.5 * (K[0, 0] * X * X + 2 * K[0, 1] * X * Y + K[1, 1] * Y * Y)


def grid_csv(grid, columns):
    """CSV text with ``x, y`` plus one column per named nodal array (x varies slowest)."""
    X, Y = grid.mesh()
    names = list(columns)
    flat = [np.asarray(columns[k]).ravel() for k in names]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y"] + names)
    for r, (xv, yv) in enumerate(zip(X.ravel(), Y.ravel())):
        w.writerow([repr(float(xv)), repr(float(yv))] + [repr(float(c[r])) for c in flat])
    return buf.getvalue()


def write_csv(path, grid, columns):
    with open(path, "w", newline="") as fh:
        fh.write(grid_csv(grid, columns))


def vector_columns(name, field):
    return {f"{name}_x": field.values[..., 0], f"{name}_y": field.values[..., 1]}
