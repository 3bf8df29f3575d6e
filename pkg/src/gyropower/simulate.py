"""Euler-Maruyama ensembles with streaming work and heat estimators.

Each trajectory draws from its own generator, seeded by a splitmix64 hash
of ``(master seed, trajectory index)``. Trajectories are independent work
units; their per-batch sums are combined in index order, so results do not
depend on how many worker threads ran them.

Estimators (all per unit time, averaged over post-burn-in steps):

* Stratonovich power: ``f_L(mid)^T dX`` with ``f_L = -Omega S x``.
* Ito power: ``-x^T S Omega^T dX - k_B Tr[Omega S T] dt / gamma`` (left point).
* Heat from bath i: ``(d_i U - f_i)(mid) dX_i`` with ``f = Omega S x``.

Standard errors use batch means.
"""
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from . import gyrator, matcore
from .errors import StepTooLarge, UnstableIntegration

N_BATCHES = 100
CHUNK_STEPS = 1 << 15
BLOWUP_FACTOR = 1e6

_MASK64 = (1 << 64) - 1


def splitmix64(x):
    """One round of the splitmix64 output function on a 64-bit integer."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def trajectory_seed(master_seed, index):
    """Seed of trajectory ``index``: ``splitmix64(seed + index * golden)`` chained twice."""
    x = (int(master_seed) + (int(index) + 1) * 0x9E3779B97F4A7C15) & _MASK64
    return splitmix64(splitmix64(x))


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 1e-3
    n_steps: int = 100_000
    burn_in: int = 5_000
    n_trajectories: int = 1
    seed: int = 0
    initial_covariance: object = "stationary"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1 or not 0 <= self.burn_in < self.n_steps:
            raise ValueError("need 0 <= burn_in < n_steps")
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def samples(self):
        return (self.n_steps - self.burn_in) * self.n_trajectories


@dataclass(frozen=True, eq=False)
class Estimate:
    value: float
    se: float

    def __iter__(self):
        yield self.value
        yield self.se


@dataclass(frozen=True, eq=False)
class TrajectoryStats:
    empirical_covariance: np.ndarray
    covariance_se: np.ndarray
    power_stratonovich: Estimate
    power_ito: Estimate
    heat_rates: np.ndarray
    heat_rates_se: np.ndarray
    wall_time: float
    # per-batch rates, rows are batches; used for SEs of derived quantities
    batches: dict = field(repr=False, default_factory=dict)
    n_samples: int = 0

    def difference_se(self, a, b):
        """Batch-means standard error of ``mean(a) - mean(b)`` for batch arrays."""
        return _se(np.asarray(a) - np.asarray(b))


def _se(x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2:
        return np.full(x.shape[1:], np.nan) if x.ndim > 1 else float("nan")
    return np.std(x, axis=0, ddof=1) / math.sqrt(x.shape[0])


@numba.njit(cache=True, nogil=True)
def _em_chunk(x, noise, drift, scale, W, G, dt, step0, burn_in, batch_len, n_batch, acc, limit):
    """Advance ``x`` through ``noise.shape[0]`` steps, accumulating into ``acc``.

    ``acc[b]`` holds [strat, ito_raw, heat_0..n-1, xx (n*n), count] for batch b.
    Returns -1 on success, else the step index at which the state blew up.
    """
    n = x.shape[0]
    width = acc.shape[1]
    loc = np.zeros(width)
    xn = np.empty(n)
    mid = np.empty(n)
    dx = np.empty(n)
    cur = -1
    for k in range(noise.shape[0]):
        step = step0 + k
        norm2 = 0.0
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += drift[i, j] * x[j]
            xn[i] = x[i] + s * dt + scale[i] * noise[k, i]
            norm2 += xn[i] * xn[i]
        if not norm2 <= limit:
            return step
        if step >= burn_in:
            b = (step - burn_in) // batch_len
            if b >= n_batch:
                b = n_batch - 1
            if b != cur:
                if cur >= 0:
                    for c in range(width):
                        acc[cur, c] += loc[c]
                        loc[c] = 0.0
                cur = b
            for i in range(n):
                mid[i] = 0.5 * (x[i] + xn[i])
                dx[i] = xn[i] - x[i]
            for i in range(n):
                wm = 0.0
                wx = 0.0
                gm = 0.0
                for j in range(n):
                    wm += W[i, j] * mid[j]
                    wx += W[i, j] * x[j]
                    gm += G[i, j] * mid[j]
                loc[0] -= wm * dx[i]
                loc[1] -= wx * dx[i]
                loc[2 + i] += gm * dx[i]
            off = 2 + n
            for i in range(n):
                for j in range(n):
                    loc[off + i * n + j] += xn[i] * xn[j]
            loc[width - 1] += 1.0
        for i in range(n):
            x[i] = xn[i]
    if cur >= 0:
        for c in range(width):
            acc[cur, c] += loc[c]
    return -1


def _batches_per_trajectory(n_traj):
    return max(1, -(-N_BATCHES // n_traj))


class _Problem:
    """Precomputed matrices shared (read-only) by all trajectories."""

    def __init__(self, model, config, sigma_ss=None):
        self.model = model
        self.config = config
        p = model.params
        self.sigma = gyrator.steady_state_covariance(model) if sigma_ss is None else sigma_ss
        S = np.linalg.inv(self.sigma)
        omega = model.load
        self.W = np.ascontiguousarray(omega @ S)
        self.G = np.ascontiguousarray(model.K_c - self.W)
        self.drift = np.ascontiguousarray(-self.G / p.gamma)
        self.scale = np.sqrt(2.0 * p.k_B * model.temperatures * config.dt / p.gamma)
        self.ito_correction = p.k_B * np.trace(self.W @ model.T) / p.gamma
        self.limit = (BLOWUP_FACTOR ** 2) * np.trace(self.sigma)
        init = config.initial_covariance
        if isinstance(init, str):
            if init != "stationary":
                raise ValueError(f"unknown initial covariance {init!r}")
            init = self.sigma
        init = matcore.as_sym(init, "initial_covariance")
        self.init_chol = np.linalg.cholesky(init)
        self.n_batch = _batches_per_trajectory(config.n_trajectories)
        post = config.n_steps - config.burn_in
        self.batch_len = max(1, post // self.n_batch)

    def run_one(self, index):
        cfg = self.config
        n = self.model.n
        rng = np.random.Generator(np.random.PCG64(trajectory_seed(cfg.seed, index)))
        x = self.init_chol @ rng.standard_normal(n)
        acc = np.zeros((self.n_batch, 3 + n + n * n))
        step = 0
        while step < cfg.n_steps:
            m = min(CHUNK_STEPS, cfg.n_steps - step)
            noise = rng.standard_normal((m, n))
            bad = _em_chunk(x, noise, self.drift, self.scale, self.W, self.G, cfg.dt,
                            step, cfg.burn_in, self.batch_len, self.n_batch, acc, self.limit)
            if bad >= 0:
                raise UnstableIntegration(
                    f"trajectory {index} left the stable region at step {bad}; reduce dt")
            step += m
        return acc


def default_threads():
    env = os.environ.get("GYROPOWER_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_ensemble(model, config, sigma_ss=None, threads=None):
    """Simulate ``config.n_trajectories`` independent paths of ``model``.

    The dynamics are ``dX = (1/gamma)(Omega S - K_c) X dt + sqrt(2 k_B T / gamma) dB``.
    Results are bit-identical for a given (model, config) whatever ``threads`` is.
    """
    t0 = time.perf_counter()
    prob = _Problem(model, config, sigma_ss)
    threads = default_threads() if threads is None else max(1, int(threads))
    idx = range(config.n_trajectories)
    if threads == 1 or config.n_trajectories == 1:
        accs = [prob.run_one(i) for i in idx]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            accs = list(pool.map(prob.run_one, idx))
    acc = np.concatenate(accs, axis=0)
    return _summarize(prob, acc, time.perf_counter() - t0)


def _summarize(prob, acc, wall):
    n = prob.model.n
    dt = prob.config.dt
    counts = acc[:, -1]
    keep = counts > 0
    acc, counts = acc[keep], counts[keep]
    per_time = acc[:, : 2 + n] / (counts[:, None] * dt)
    strat_b = per_time[:, 0]
    ito_b = per_time[:, 1] - prob.ito_correction
    heat_b = per_time[:, 2:]
    xx_b = acc[:, 2 + n: 2 + n + n * n] / counts[:, None]
    total = counts.sum()
    w = counts / total

    def mean(x):
        return np.tensordot(w, x, axes=1)

    cov = mean(xx_b).reshape(n, n)
    cov = matcore.sym_part(cov)
    return TrajectoryStats(
        empirical_covariance=cov,
        covariance_se=_se(xx_b).reshape(n, n),
        power_stratonovich=Estimate(float(mean(strat_b)), float(_se(strat_b))),
        power_ito=Estimate(float(mean(ito_b)), float(_se(ito_b))),
        heat_rates=mean(heat_b),
        heat_rates_se=_se(heat_b),
        wall_time=wall,
        batches={"power_stratonovich": strat_b, "power_ito": ito_b, "heat": heat_b,
                 "covariance": xx_b},
        n_samples=int(total),
    )


def estimate_power_stratonovich(X, omega, sigma_ss, dt):
    """Midpoint-rule power from a stored path ``X`` (steps x n)."""
    X = np.asarray(X, dtype=float)
    W = np.asarray(omega) @ np.linalg.inv(sigma_ss)
    mid = 0.5 * (X[1:] + X[:-1])
    dX = np.diff(X, axis=0)
    return float(-np.einsum("ki,ij,kj->", dX, W, mid) / (dX.shape[0] * dt))


def estimate_power_ito(X, model, sigma_ss, dt):
    """Left-point power estimator with the Ito correction for ``model.omega``."""
    X = np.asarray(X, dtype=float)
    W = model.load @ np.linalg.inv(sigma_ss)
    dX = np.diff(X, axis=0)
    raw = -np.einsum("ki,ij,kj->", dX, W, X[:-1]) / (dX.shape[0] * dt)
    return float(raw - model.params.k_B * np.trace(W @ model.T) / model.params.gamma)


def estimate_heat_rates(X, model, sigma_ss, dt):
    """Per-bath heat uptake ``(d_i U - f_i)(mid) dX_i`` averaged over a stored path."""
    X = np.asarray(X, dtype=float)
    G = model.K_c - model.load @ np.linalg.inv(sigma_ss)
    mid = 0.5 * (X[1:] + X[:-1])
    dX = np.diff(X, axis=0)
    return (mid @ G.T * dX).sum(axis=0) / (dX.shape[0] * dt)


def _em_chain(model, dt, sigma_ss):
    """``(W, D, A, Qd, Sd)`` for the EM chain ``x_{k+1} = A x_k + xi``, ``Cov xi = Qd``."""
    sigma = gyrator.steady_state_covariance(model) if sigma_ss is None else sigma_ss
    p = model.params
    W = model.load @ np.linalg.inv(sigma)
    D = (W - model.K_c) / p.gamma
    n = model.n
    A = np.eye(n) + dt * D
    Qd = 2.0 * p.k_B * model.T * dt / p.gamma
    # stationary covariance: S = A S A^T + Qd
    lhs = np.eye(n * n) - np.kron(A, A)
    Sd = matcore.sym_part(np.linalg.solve(lhs, Qd.reshape(-1)).reshape(n, n))
    return W, D, A, Qd, Sd


def expected_power_em(model, dt, sigma_ss=None):
    """Exact stationary mean of the midpoint power estimator under the EM chain.

    Equals the analytic power as ``dt -> 0``; the difference is the
    discretization bias of a simulation run at step ``dt``.
    """
    W, D, A, Qd, Sd = _em_chain(model, dt, sigma_ss)
    n = model.n
    # E[-mid^T W^T dX], mid = ((I+A)x + xi)/2, dX = (A-I)x + xi
    val = -0.5 * (np.trace(W.T @ (A - np.eye(n)) @ Sd @ (np.eye(n) + A).T) + np.trace(W.T @ Qd))
    return float(val / dt)


def estimator_gap_em(model, dt, sigma_ss=None):
    """Exact stationary mean of (midpoint - Ito) power under the EM chain.

    Per step the two differ by ``-dX^T W^T dX / 2``; the Ito correction only
    removes the noise part of ``E[dX dX^T]``, leaving ``-(dt/2) Tr[W^T D Sd D^T]``
    per unit time. Any first-order scheme leaves a gap of this order.
    """
    W, D, _, _, Sd = _em_chain(model, dt, sigma_ss)
    return float(-0.5 * dt * np.trace(W.T @ D @ Sd @ D.T))


def transient_covariance(model, sigma0, t_end, dt, store_every=1):
    """Integrate ``gamma dSigma/dt = -K_c Sigma - Sigma K_c + 2 k_B T`` by RK4.

    Returns ``(times, sigmas)`` with ``sigmas`` of shape (m, n, n). Raises
    StepTooLarge if a stored iterate stops being positive definite.
    """
    K, p = model.K_c, model.params
    Q = 2.0 * p.k_B * model.T
    S = matcore.as_sym(sigma0, "sigma0")
    matcore.check_positive_definite(S, "sigma0")
    n_steps = int(math.ceil(t_end / dt - 1e-12))
    h = t_end / n_steps

    def rhs(S):
        return (Q - K @ S - S @ K) / p.gamma

    times, out = [0.0], [S.copy()]
    for k in range(1, n_steps + 1):
        k1 = rhs(S)
        k2 = rhs(S + 0.5 * h * k1)
        k3 = rhs(S + 0.5 * h * k2)
        k4 = rhs(S + h * k3)
        S = matcore.sym_part(S + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
        if k % store_every == 0 or k == n_steps:
            if not np.all(np.isfinite(S)) or np.linalg.eigvalsh(S)[0] <= 0:
                raise StepTooLarge(f"covariance lost positive definiteness at t={k * h:.4g}")
            times.append(k * h)
            out.append(S.copy())
    return np.array(times), np.array(out)
