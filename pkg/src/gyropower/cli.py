"""Command-line front-end.

    gyropower <command> --config cfg.json [--out PATH] [--format json|csv]
              [--seed N] [--threads N]

Commands: ness, optimal-load, sweep, simulate, transient, circuit, field.
Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 non-convergence.
Errors are printed to stdout as a JSON object.
"""
import argparse
import copy
import io
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, circuit, fieldsolver, gyrator, matcore, simulate
from .errors import ConfigError, GyroError, NotSkewRealizable, RangeError, SchemaError

COMMANDS = ("ness", "optimal-load", "sweep", "simulate", "transient", "circuit", "field")
MODEL_COMMANDS = {"ness", "optimal-load", "sweep", "simulate", "transient", "field"}

# (type, default) for every section key; None default means required/absent
SECTIONS = {
    "sweep": {"alphas": (list, None), "n_points": (int, 101)},
    "simulation": {
        "dt": (float, 1e-3),
        "n_steps": (int, 1_010_000),
        "burn_in": (int, 10_000),
        "n_trajectories": (int, 10),
        "seed": (int, 0),
        "initial_covariance": ((str, list), "stationary"),
        "load": ((str, float, list), "optimal"),
    },
    "transient": {
        "sigma0": ((str, list), "identity"),
        "t_end": (float, None),
        "dt": (float, None),
        "store_every": (int, 10),
    },
    "circuit": {
        "C1": (float, None), "C2": (float, None), "Cc": (float, None), "R": (float, 1.0),
        "T1": (float, None), "T2": (float, None), "C_nr": (list, None),
        "design": ((str, float), None),
    },
    "field": {"n": (int, 128), "half_width_sigmas": (float, 7.0), "alpha": (float, 0.5)},
    "output": {"format": (str, "json"), "record_wall_time": (bool, False)},
}
TOP_LEVEL = {"command", "K_c", "T", "k_B", "gamma", "omega"} | set(SECTIONS)


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated configuration; ``values`` is the canonical JSON-ready form."""

    command: str
    values: dict

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.command == other.command \
            and self.values == other.values

    def section(self, name):
        return self.values.get(name, {})

    def to_json(self):
        return copy.deepcopy(self.values)


# ---------------------------------------------------------------- parsing

class _Problems:
    def __init__(self):
        self.schema = []
        self.range = []

    def bad_schema(self, path, msg):
        self.schema.append((path, msg))

    def bad_range(self, path, msg):
        self.range.append((path, msg))

    def raise_if_any(self):
        if self.schema:
            probs = self.schema + self.range
            raise SchemaError("; ".join(f"{p}: {m}" for p, m in probs), probs)
        if self.range:
            raise RangeError("; ".join(f"{p}: {m}" for p, m in self.range), self.range)


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _matrix(value, path, probs, n=None):
    if not (isinstance(value, list) and value and all(isinstance(r, list) for r in value)):
        probs.bad_schema(path, "expected a matrix (list of rows)")
        return None
    m = len(value)
    if any(len(r) != m for r in value):
        probs.bad_schema(path, "matrix must be square")
        return None
    if n is not None and m != n:
        probs.bad_range(path, f"expected {n}x{n}, got {m}x{m}")
        return None
    ok = True
    for i, row in enumerate(value):
        for j, x in enumerate(row):
            if not _is_num(x):
                probs.bad_schema(f"{path}[{i}][{j}]", "expected a finite number")
                ok = False
    return [[float(x) for x in row] for row in value] if ok else None


def _check_type(value, typ, path, probs):
    types = typ if isinstance(typ, tuple) else (typ,)
    for t in types:
        if t is float and _is_num(value):
            return float(value)
        if t is int and isinstance(value, int) and not isinstance(value, bool):
            return value
        if t is bool and isinstance(value, bool):
            return value
        if t in (str, list) and isinstance(value, t):
            return value
    names = "/".join("number" if t is float else t.__name__ for t in types)
    probs.bad_schema(path, f"expected {names}")
    return None


def _positive(value, path, probs, allow_zero=False):
    if value is None:
        return
    if value < 0 or (value == 0 and not allow_zero):
        probs.bad_range(path, "must be positive" if not allow_zero else "must be non-negative")


def _parse_model(raw, probs, out):
    K = None
    if "K_c" not in raw:
        probs.bad_schema("K_c", "required")
    else:
        K = _matrix(raw["K_c"], "K_c", probs)
    temps = raw.get("T")
    if temps is None:
        probs.bad_schema("T", "required")
    elif not isinstance(temps, list) or not temps:
        probs.bad_schema("T", "expected a list of bath temperatures")
        temps = None
    else:
        clean = []
        for i, t in enumerate(temps):
            if not _is_num(t):
                probs.bad_schema(f"T[{i}]", "expected a finite number")
            elif t <= 0:
                probs.bad_range(f"T[{i}]", "temperature must be positive")
            clean.append(float(t) if _is_num(t) else None)
        temps = clean
    for key in ("k_B", "gamma"):
        v = raw.get(key, 1.0)
        v = _check_type(v, float, key, probs)
        _positive(v, key, probs)
        out[key] = v
    if K is not None:
        A = np.array(K)
        if np.abs(A - A.T).max() > 1e-12 * max(1.0, np.abs(A).max()):
            probs.bad_range("K_c", "must be symmetric")
        elif np.linalg.eigvalsh(A)[0] <= matcore.PD_RTOL * max(np.linalg.eigvalsh(A)[-1], 0):
            probs.bad_range("K_c", "must be positive definite")
        if temps is not None and len(temps) != len(K):
            probs.bad_range("T", f"expected {len(K)} temperatures, got {len(temps)}")
        if len(K) > matcore.MAX_GENERAL_DIM:
            probs.bad_range("K_c", f"dimension above {matcore.MAX_GENERAL_DIM} is not supported")
    out["K_c"] = K
    out["T"] = temps
    if "omega" in raw and raw["omega"] is not None:
        om = _matrix(raw["omega"], "omega", probs, len(K) if K else None)
        if om is not None:
            A = np.array(om)
            if np.abs(A + A.T).max() > 1e-12 * max(1.0, np.abs(A).max()):
                probs.bad_range("omega", "must be skew-symmetric")
        out["omega"] = om


def _parse_section(name, raw, probs):
    spec = SECTIONS[name]
    if not isinstance(raw, dict):
        probs.bad_schema(name, "expected an object")
        raw = {}
    out = {}
    for key in raw:
        if key not in spec:
            probs.bad_schema(f"{name}.{key}", "unknown key")
    for key, (typ, default) in spec.items():
        if key in raw and raw[key] is not None:
            out[key] = _check_type(raw[key], typ, f"{name}.{key}", probs)
        else:
            out[key] = default
    return out


def _validate_sections(cfg, probs):
    sim = cfg.get("simulation")
    if sim:
        _positive(sim["dt"], "simulation.dt", probs)
        for key in ("n_steps", "n_trajectories"):
            if sim[key] is not None and sim[key] < 1:
                probs.bad_range(f"simulation.{key}", "must be >= 1")
        if sim["burn_in"] is not None and sim["n_steps"] is not None:
            if not 0 <= sim["burn_in"] < sim["n_steps"]:
                probs.bad_range("simulation.burn_in", "must satisfy 0 <= burn_in < n_steps")
        if sim["seed"] is not None and not 0 <= sim["seed"] < 2 ** 64:
            probs.bad_range("simulation.seed", "must be a 64-bit unsigned integer")
        ic = sim["initial_covariance"]
        if isinstance(ic, str) and ic != "stationary":
            probs.bad_range("simulation.initial_covariance", "string form must be 'stationary'")
        elif isinstance(ic, list):
            sim["initial_covariance"] = _matrix(ic, "simulation.initial_covariance", probs)
        load = sim["load"]
        if isinstance(load, str) and load not in ("optimal", "none"):
            probs.bad_range("simulation.load", "must be 'optimal', 'none', an alpha, or a matrix")
        elif isinstance(load, list):
            sim["load"] = _matrix(load, "simulation.load", probs)
    sw = cfg.get("sweep")
    if sw:
        if sw["alphas"] is not None:
            for i, a in enumerate(sw["alphas"]):
                if not _is_num(a):
                    probs.bad_schema(f"sweep.alphas[{i}]", "expected a finite number")
            sw["alphas"] = [float(a) for a in sw["alphas"] if _is_num(a)]
        if sw["n_points"] is not None and sw["n_points"] < 2:
            probs.bad_range("sweep.n_points", "must be >= 2")
    tr = cfg.get("transient")
    if tr:
        _positive(tr["t_end"], "transient.t_end", probs)
        _positive(tr["dt"], "transient.dt", probs)
        if tr["store_every"] is not None and tr["store_every"] < 1:
            probs.bad_range("transient.store_every", "must be >= 1")
        s0 = tr["sigma0"]
        if isinstance(s0, str) and s0 not in ("identity", "stationary"):
            probs.bad_range("transient.sigma0", "string form must be 'identity' or 'stationary'")
        elif isinstance(s0, list):
            tr["sigma0"] = _matrix(s0, "transient.sigma0", probs)
    ci = cfg.get("circuit")
    if ci:
        for key in ("C1", "C2", "R", "T1", "T2"):
            if ci[key] is None:
                probs.bad_schema(f"circuit.{key}", "required")
            _positive(ci[key], f"circuit.{key}", probs)
        if ci["Cc"] is None:
            probs.bad_schema("circuit.Cc", "required")
        _positive(ci["Cc"], "circuit.Cc", probs, allow_zero=True)
        if ci["C_nr"] is not None:
            ci["C_nr"] = _matrix(ci["C_nr"], "circuit.C_nr", probs, 2)
        d = ci["design"]
        if isinstance(d, str) and d != "optimal":
            probs.bad_range("circuit.design", "must be 'optimal' or an alpha")
        if d is not None and ci["C_nr"] is not None:
            probs.bad_range("circuit.design", "give either design or C_nr, not both")
    fi = cfg.get("field")
    if fi:
        if fi["n"] is not None and fi["n"] < fieldsolver.MIN_POINTS:
            probs.bad_range("field.n", f"must be >= {fieldsolver.MIN_POINTS}")
        if fi["half_width_sigmas"] is not None and fi["half_width_sigmas"] < 5:
            probs.bad_range("field.half_width_sigmas", "box must cover at least 5 standard deviations")
    out = cfg.get("output")
    if out and out["format"] not in ("json", "csv"):
        probs.bad_range("output.format", "must be 'json' or 'csv'")


def parse_config(text, command=None):
    """Parse and validate a JSON config document.

    Every offending field is collected before raising. Unknown keys and
    wrong types give SchemaError; out-of-range values give RangeError.
    """
    probs = _Problems()
    try:
        raw = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError(f"invalid JSON: {exc}", [("", str(exc))]) from exc
    if not isinstance(raw, dict):
        raise SchemaError("config must be a JSON object", [("", "expected an object")])
    for key in raw:
        if key not in TOP_LEVEL:
            probs.bad_schema(key, "unknown key")
    cmd = raw.get("command", command)
    if command is not None and cmd != command:
        probs.bad_range("command", f"config says {cmd!r} but {command!r} was requested")
    if cmd not in COMMANDS:
        probs.bad_schema("command", f"must be one of {', '.join(COMMANDS)}")
    cfg = {"command": cmd}
    if cmd in MODEL_COMMANDS or "K_c" in raw:
        _parse_model(raw, probs, cfg)
    else:
        for key in ("k_B", "gamma"):
            v = _check_type(raw.get(key, 1.0), float, key, probs)
            _positive(v, key, probs)
            cfg[key] = v
    needed = {"sweep": ["sweep"], "simulate": ["simulation"], "transient": ["transient"],
              "circuit": ["circuit"], "field": ["field"]}.get(cmd, [])
    for name in SECTIONS:
        if name in raw or name in needed or name == "output":
            if name == "circuit" and name not in raw:
                probs.bad_schema("circuit", "required for the circuit command")
                continue
            cfg[name] = _parse_section(name, raw.get(name, {}), probs)
    _validate_sections(cfg, probs)
    probs.raise_if_any()
    return RunConfig(cmd, cfg)


# ---------------------------------------------------------------- encoding

def _mat(A, unit, provenance):
    A = np.asarray(A, dtype=float)
    return {"n": int(A.shape[0]), "data": [float(x) for x in A.ravel()],
            "unit": unit, "provenance": provenance}


def _scalar(x, unit, provenance, se=None):
    out = {"value": float(x), "unit": unit, "provenance": provenance}
    if se is not None:
        out["se"] = float(se)
    return out


def _vec(v, unit, provenance, se=None):
    out = {"data": [float(x) for x in v], "unit": unit, "provenance": provenance}
    if se is not None:
        out["se"] = [float(x) for x in se]
    return out


def _model(cfg):
    v = cfg.values
    params = gyrator.ModelParams(k_B=v["k_B"], gamma=v["gamma"])
    return gyrator.LinearGyratorModel(np.array(v["K_c"]), np.array(v["T"]), params,
                                      None if v.get("omega") is None else np.array(v["omega"]))


# ---------------------------------------------------------------- commands

def _cmd_ness(cfg, opts):
    model = _model(cfg)
    rep = gyrator.max_power(model)
    q = gyrator.heat_rates(model.with_load(None), rep.sigma_ss)
    results = {
        "sigma_ss": _mat(rep.sigma_ss, "length^2", "analytic"),
        "velocity_coeff": _mat(rep.velocity_coeff, "1/time", "analytic"),
        "detailed_balance": rep.detailed_balance,
        "commutator_norm": _scalar(rep.commutator_norm, "energy/length^2*temperature", "analytic"),
        "heat_rates_no_load": _vec(q, "energy/time", "analytic"),
        "p_star": _scalar(rep.p_star, "energy/time", "analytic"),
    }
    diag = {"lyapunov_residual": rep.lyapunov_residual}
    return results, diag, None


def _cmd_optimal_load(cfg, opts):
    model = _model(cfg)
    rep = gyrator.max_power(model)
    S = np.linalg.inv(rep.sigma_ss)
    B = gyrator.source_coefficient(model, rep.sigma_ss)
    M = 2 * rep.omega_star @ S + model.params.k_B * model.T @ S
    results = {
        "sigma_ss": _mat(rep.sigma_ss, "length^2", "analytic"),
        "omega_star": _mat(rep.omega_star, "energy", "analytic"),
        "p_star": _scalar(rep.p_star, "energy/time", "analytic"),
        "source_force_coeff": _mat(B, "force/length", "analytic"),
        "optimal_load_force_coeff": _mat(-rep.omega_star @ S, "force/length", "analytic"),
        "detailed_balance": rep.detailed_balance,
    }
    diag = {
        "omega_residual": rep.omega_residual,
        "matching_residual": gyrator.matching_residual(model, rep),
        "first_order_asymmetry": float(np.linalg.norm(M - M.T)),
    }
    return results, diag, None


def _sweep_alphas(sec):
    if sec["alphas"] is not None:
        return sec["alphas"]
    n = sec["n_points"]
    return [i / (n - 1) for i in range(n)]


def _cmd_sweep(cfg, opts):
    model = _model(cfg)
    rep = gyrator.max_power(model)
    rows = gyrator.load_sweep(model, _sweep_alphas(cfg.section("sweep")), rep)
    quad = [4 * rep.p_star * a * (1 - a) for a, _ in rows]
    best = max(rows, key=lambda r: r[1])
    results = {
        "p_star": _scalar(rep.p_star, "energy/time", "analytic"),
        "alpha": [a for a, _ in rows],
        "P": {"data": [p for _, p in rows], "unit": "energy/time", "provenance": "analytic"},
        "argmax_alpha": best[0],
    }
    diag = {"max_quadratic_deviation": max(abs(p - q) for (_, p), q in zip(rows, quad))}
    table = (["alpha", "P", "P_quadratic"], [[a, p, q] for (a, p), q in zip(rows, quad)])
    return results, diag, table


def _resolve_load(model, rep, load):
    if isinstance(load, list):
        return np.array(load)
    if load == "none":
        return None
    if load == "optimal":
        return rep.omega_star
    return 2.0 * float(load) * rep.omega_star


def _cmd_simulate(cfg, opts):
    model = _model(cfg)
    sec = cfg.section("simulation")
    rep = gyrator.max_power(model)
    loaded = model.with_load(_resolve_load(model, rep, sec["load"]))
    ic = sec["initial_covariance"]
    sc = simulate.SimulationConfig(
        dt=sec["dt"], n_steps=sec["n_steps"], burn_in=sec["burn_in"],
        n_trajectories=sec["n_trajectories"], seed=sec["seed"],
        initial_covariance=ic if isinstance(ic, str) else np.array(ic))
    st = simulate.run_ensemble(loaded, sc, rep.sigma_ss, threads=opts.get("threads"))
    b = st.batches
    p_an = gyrator.power_of_load(loaded.load, rep.sigma_ss, model.T, model.params)
    closure = b["heat"].sum(axis=1) - b["power_stratonovich"]
    results = {
        "empirical_covariance": dict(_mat(st.empirical_covariance, "length^2", "monte-carlo"),
                                     se=[float(x) for x in st.covariance_se.ravel()]),
        "power_stratonovich": _scalar(st.power_stratonovich.value, "energy/time", "monte-carlo",
                                      st.power_stratonovich.se),
        "power_ito": _scalar(st.power_ito.value, "energy/time", "monte-carlo", st.power_ito.se),
        "heat_rates": _vec(st.heat_rates, "energy/time", "monte-carlo", st.heat_rates_se),
        "power_analytic": _scalar(p_an, "energy/time", "analytic"),
        "sigma_ss": _mat(rep.sigma_ss, "length^2", "analytic"),
        "load_omega": _mat(loaded.load, "energy", "analytic"),
    }
    diag = {
        "n_samples": st.n_samples,
        "n_batches": int(b["power_ito"].shape[0]),
        "strat_minus_ito": _scalar(st.power_stratonovich.value - st.power_ito.value, "energy/time",
                                   "monte-carlo",
                                   st.difference_se(b["power_stratonovich"], b["power_ito"])),
        "first_law_gap": _scalar(float(np.mean(closure)), "energy/time", "monte-carlo",
                                 simulate._se(closure)),
        # exact discrete-chain values: midpoint bias and the midpoint-Ito offset at this dt
        "power_em_expected": _scalar(simulate.expected_power_em(loaded, sc.dt, rep.sigma_ss),
                                     "energy/time", "analytic"),
        "strat_minus_ito_em": _scalar(simulate.estimator_gap_em(loaded, sc.dt, rep.sigma_ss),
                                      "energy/time", "analytic"),
    }
    if cfg.section("output").get("record_wall_time"):
        diag["wall_time"] = _scalar(st.wall_time, "s", "monte-carlo")
    return results, diag, None


def _cmd_transient(cfg, opts):
    model = _model(cfg)
    sec = cfg.section("transient")
    sigma_ss = gyrator.steady_state_covariance(model)
    lam = np.linalg.eigvalsh(model.K_c)
    s0 = sec["sigma0"]
    if s0 == "identity":
        s0 = np.eye(model.n)
    elif s0 == "stationary":
        s0 = sigma_ss
    else:
        s0 = np.array(s0)
    g = model.params.gamma
    t_end = sec["t_end"] if sec["t_end"] is not None else 20.0 * g / lam[0]
    dt = sec["dt"] if sec["dt"] is not None else 0.05 * g / lam[-1]
    times, sig = simulate.transient_covariance(model, s0, t_end, dt, sec["store_every"])
    dist = [float(np.linalg.norm(s - sigma_ss)) for s in sig]
    results = {
        "sigma_final": _mat(sig[-1], "length^2", "analytic"),
        "sigma_ss": _mat(sigma_ss, "length^2", "analytic"),
        "distance_final": _scalar(dist[-1], "length^2", "analytic"),
        "min_eigenvalue": _scalar(min(np.linalg.eigvalsh(s)[0] for s in sig), "length^2", "analytic"),
    }
    n = model.n
    header = ["t"] + [f"S{i + 1}{j + 1}" for i in range(n) for j in range(n)] + ["distance"]
    rows = [[t] + list(s.ravel()) + [d] for t, s, d in zip(times, sig, dist)]
    return results, {"t_end": t_end, "dt": dt, "stored": len(times)}, (header, rows)


def _cmd_circuit(cfg, opts):
    sec = cfg.section("circuit")
    v = cfg.values
    base = circuit.CircuitSpec(sec["C1"], sec["C2"], sec["Cc"], sec["R"], sec["T1"], sec["T2"],
                               k_B=v["k_B"])
    mapped = circuit.circuit_to_langevin(base).as_gyrator()
    rep = gyrator.max_power(mapped)
    diag = {}
    if sec["design"] is not None:
        target = rep.omega_star if sec["design"] == "optimal" else 2.0 * sec["design"] * rep.omega_star
        spec = circuit.design_cnr(base.C, base.R, base.T, target, base.params)
        Chi = np.linalg.inv(spec.C_hat)
        S = np.linalg.inv(circuit.load_free_covariance(spec))
        diag["design_residual"] = float(np.linalg.norm(Chi.T @ spec.C_nr.T @ Chi - target @ S))
    elif sec["C_nr"] is not None:
        spec = base.with_cnr(np.array(sec["C_nr"]))
    else:
        spec = base
    lang = circuit.circuit_to_langevin(spec)
    fields = circuit.force_decomposition(spec)
    results = {
        "capacitance": _mat(spec.C, "charge/voltage", "analytic"),
        "C_nr": _mat(spec.C_nr, "charge/voltage", "analytic"),
        "drift": _mat(lang.drift, "voltage/charge", "analytic"),
        "mapped_stiffness": _mat(mapped.K_c, "voltage/charge", "analytic"),
        "sigma_load_free": _mat(circuit.load_free_covariance(spec), "charge^2", "analytic"),
        "sigma_realized": _mat(circuit.circuit_steady_state(spec), "charge^2", "analytic"),
        "source_coeff": _mat(fields.source_coeff, "voltage/charge", "analytic"),
        "load_coeff": _mat(fields.load_coeff, "voltage/charge", "analytic"),
        "mapped_p_star": _scalar(rep.p_star, "energy/time", "analytic"),
        "circuit_power": _scalar(circuit.circuit_power(spec), "energy/time", "analytic"),
    }
    try:
        results["circuit_power_realized"] = _scalar(
            circuit.circuit_power(spec, covariance="realized"), "energy/time", "analytic")
    except NotSkewRealizable as exc:
        diag["realized_power_error"] = {"code": exc.code, "message": str(exc)}
    diag["premise_gap"] = circuit.premise_gap(spec)
    return results, diag, None


def _cmd_field(cfg, opts):
    model = _model(cfg)
    if model.n != 2:
        raise RangeError("field solver is two-dimensional", [("K_c", "must be 2x2 for field")])
    sec = cfg.section("field")
    p = model.params
    rep = gyrator.max_power(model)
    S = rep.sigma_ss
    sd = np.sqrt(np.diag(S))
    k = sec["half_width_sigmas"]
    grid = fieldsolver.Grid2D.centered(k * sd[0], k * sd[1], sec["n"])
    rho = fieldsolver.gaussian_density(grid, S)
    U = fieldsolver.solve_confining_potential(rho, model.T, p)
    exact = fieldsolver.quadratic_potential(grid, model.K_c)
    exact = exact - rho.mean(exact)
    u_err = fieldsolver.weighted_l2(U.values - exact, rho) / fieldsolver.weighted_l2(exact, rho)
    f_S = fieldsolver.source_force_field(rho, U, model.T, p)
    f_L = fieldsolver.optimal_load_field(f_S)
    if sec["alpha"] != 0.5:
        f_L = f_L * (2 * sec["alpha"])
    P = fieldsolver.power_quadrature(f_L, f_S, rho, p)
    v = fieldsolver.GridVectorField(grid, (f_S.values - f_L.values) / p.gamma)
    P_heat = fieldsolver.power_heat_decomposition(v, rho, model.T, p)
    a = sec["alpha"]
    results = {
        "power_quadrature": _scalar(P, "energy/time", "grid"),
        "power_heat_decomposition": _scalar(P_heat, "energy/time", "grid"),
        "power_analytic": _scalar(4 * rep.p_star * a * (1 - a), "energy/time", "analytic"),
        "potential_relative_error": _scalar(u_err, "1", "grid"),
        "h": [grid.h_x, grid.h_y],
    }
    diag = {
        "poisson_residual": U.residual,
        "normalization": rho.normalization,
        "divergence_residual_f_S": fieldsolver.divergence_residual(f_S, rho),
    }
    cols = {"rho": rho.values, "U_c": U.values}
    cols.update(fieldsolver.vector_columns("f_S", f_S))
    cols.update(fieldsolver.vector_columns("f_L", f_L))
    return results, diag, ("grid", grid, cols)


HANDLERS = {
    "ness": _cmd_ness, "optimal-load": _cmd_optimal_load, "sweep": _cmd_sweep,
    "simulate": _cmd_simulate, "transient": _cmd_transient, "circuit": _cmd_circuit,
    "field": _cmd_field,
}


def run(config, threads=None):
    """Execute a validated config; returns ``(document, table)``.

    ``table`` is None, ``(header, rows)`` or ``("grid", grid, columns)``.
    """
    results, diag, table = HANDLERS[config.command](config, {"threads": threads})
    doc = {
        "tool": "gyropower",
        "version": __version__,
        "command": config.command,
        "seed": config.section("simulation").get("seed"),
        "config": config.to_json(),
        "results": results,
        "diagnostics": diag,
    }
    return doc, table


def _flatten(prefix, node, rows):
    if isinstance(node, dict) and "value" in node:
        rows.append([prefix, node["value"], node.get("se", ""), node["unit"], node["provenance"]])
    elif isinstance(node, dict) and "data" in node:
        n = node.get("n")
        for k, x in enumerate(node["data"]):
            idx = f"[{k // n}][{k % n}]" if n else f"[{k}]"
            se = node["se"][k] if "se" in node else ""
            rows.append([prefix + idx, x, se, node["unit"], node["provenance"]])
    elif isinstance(node, dict):
        for k, v in node.items():
            _flatten(f"{prefix}.{k}" if prefix else k, v, rows)
    elif isinstance(node, list):
        for k, x in enumerate(node):
            rows.append([f"{prefix}[{k}]", x, "", "", ""])
    else:
        rows.append([prefix, node, "", "", ""])


def render(doc, table, fmt):
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if table is not None and table[0] == "grid":
        return fieldsolver.grid_csv(table[1], table[2])
    buf = io.StringIO()
    if table is not None:
        header, rows = table
        buf.write(",".join(header) + "\n")
        for row in rows:
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
    else:
        rows = []
        _flatten("", doc["results"], rows)
        buf.write("quantity,value,se,unit,provenance\n")
        for r in rows:
            buf.write(",".join(str(x) for x in r) + "\n")
    return buf.getvalue()


def _error_doc(exc):
    err = {"code": getattr(exc, "code", "ERROR"), "exit_code": getattr(exc, "exit_code", 3),
           "message": str(exc)}
    if isinstance(exc, ConfigError) and exc.problems:
        err["problems"] = [{"field": f, "message": m} for f, m in exc.problems]
    return json.dumps({"error": err}, indent=2) + "\n"


def build_parser():
    ap = argparse.ArgumentParser(prog="gyropower", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON config file")
    ap.add_argument("--out", help="output path (default: stdout)")
    ap.add_argument("--format", choices=("json", "csv"), help="overrides output.format")
    ap.add_argument("--seed", type=int, help="overrides simulation.seed")
    ap.add_argument("--threads", type=int, help="worker threads (env GYROPOWER_THREADS)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise SchemaError(f"cannot read config: {exc}", [("--config", str(exc))]) from exc
        cfg = parse_config(text, command=args.command)
        if args.seed is not None or args.format is not None:
            values = cfg.to_json()
            if args.seed is not None and "simulation" in values:
                values["simulation"]["seed"] = args.seed
            if args.format is not None:
                values["output"]["format"] = args.format
            cfg = parse_config(json.dumps(values), command=args.command)
        doc, table = run(cfg, threads=args.threads)
        text = render(doc, table, cfg.section("output")["format"])
    except (GyroError, ValueError) as exc:
        if not isinstance(exc, GyroError):
            exc = _wrap_value_error(exc)
        sys.stdout.write(_error_doc(exc))
        return exc.exit_code
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _wrap_value_error(exc):
    err = GyroError(str(exc))
    err.code = "NUMERICAL_ERROR"
    return err


if __name__ == "__main__":
    sys.exit(main())
