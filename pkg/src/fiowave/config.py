"""Scenario configuration: TOML schema, validation, and pipeline
assembly.

A scenario file has nested blocks [grid], [equation], [noise],
[coefficients], [solver], [probe], [output] under an explicit
schema_version.  Coefficients and noise coefficients are expression
strings over t and x1..xd (whitelisted functions only), so equations
are user-definable without code changes.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .expr import coefficient_from_expression, evaluate, parse
from .grid import Grid
from .measures import SpectralMeasure

SCHEMA_VERSION = 1


@dataclass
class ScenarioConfig:
    raw: dict
    path: str
    grid: Grid
    equation: dict
    noise: dict
    coefficients: dict
    solver: dict
    probe: dict
    output: dict

    @property
    def seed(self) -> int:
        return int(self.noise.get("seed", 0))

    @property
    def digest(self) -> str:
        return hashlib.sha256(repr(sorted_items(self.raw)).encode()).hexdigest()


def sorted_items(obj):
    if isinstance(obj, dict):
        return tuple((k, sorted_items(v)) for k, v in sorted(obj.items()))
    if isinstance(obj, list):
        return tuple(sorted_items(v) for v in obj)
    return obj


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing {key!r} in [{where}]")
    return block[key]


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version {version!r} unsupported (expected {SCHEMA_VERSION})"
        )

    gblock = raw.get("grid", {})
    grid = Grid(
        dim=int(gblock.get("dim", 1)),
        length=float(_require(gblock, "length", "grid")),
        points=int(_require(gblock, "points", "grid")),
    )

    eq = dict(raw.get("equation", {}))
    kind = eq.setdefault("kind", "wave")
    if kind not in ("wave", "second-order", "weak", "constant"):
        raise ConfigError(f"unknown equation kind {kind!r}")
    order = int(eq.get("order", 2))
    if kind in ("wave", "second-order", "weak") and order != 2:
        raise ConfigError("variable-coefficient equations support order 2 only")
    if kind == "constant" and order not in (2, 3, 4):
        raise ConfigError("constant-coefficient mode supports orders 2, 3, 4")
    if kind == "weak":
        _require(eq, "k", "equation")
        _require(eq, "coupling", "equation")
    if kind == "second-order":
        a = _require(eq, "a", "equation")
        if len(a) not in (1, grid.dim * grid.dim):
            raise ConfigError("equation.a needs d*d entries (row major)")
        for entry in list(a) + list(eq.get("b", [])) + [eq.get("c", "0")]:
            parse(entry)  # surfaces syntax errors at load time
    if kind == "constant":
        for row in _require(eq, "coefficients", "equation"):
            alpha = tuple(int(v) for v in row["alpha"])
            if len(alpha) != grid.dim:
                raise ConfigError("constant coefficient alpha must have d entries")
            if sum(alpha) > order - int(row["j"]):
                raise ConfigError("constant coefficient exceeds operator order")

    noise = dict(raw.get("noise", {}))
    noise.setdefault("measure", "white")
    noise.setdefault("seed", 0)
    noise.setdefault("paths", 1000)
    if noise["measure"] not in ("white", "riesz", "bessel", "delta0"):
        raise ConfigError(f"unknown measure {noise['measure']!r}")
    if noise["measure"] in ("riesz", "bessel") and "eta" not in noise:
        raise ConfigError(f"measure {noise['measure']} needs an eta parameter")

    coeffs = dict(raw.get("coefficients", {}))
    coeffs.setdefault("sigma", "1")
    coeffs.setdefault("gamma", "0")
    parse(str(coeffs["sigma"]))
    parse(str(coeffs["gamma"]))

    solver = dict(raw.get("solver", {}))
    solver.setdefault("levels", 4)
    solver.setdefault("quad_nodes", 8)
    solver.setdefault("panels", 3)
    solver.setdefault("horizon", 1.0)
    solver.setdefault("eikonal_steps", 200)

    probe = dict(raw.get("probe", {}))
    probe.setdefault("t", [1.0])
    probe.setdefault("x", [[0.0]])
    probe.setdefault("nu", 1.0)
    probe.setdefault("eta", [0.0, 1.0, 4.0])

    output = dict(raw.get("output", {}))
    output.setdefault("directory", "out")

    return ScenarioConfig(raw=raw, path=path, grid=grid, equation=eq, noise=noise,
                          coefficients=coeffs, solver=solver, probe=probe,
                          output=output)


def build_measure(cfg: ScenarioConfig) -> SpectralMeasure:
    name = cfg.noise["measure"]
    d = cfg.grid.dim
    if name == "white":
        return SpectralMeasure.white_noise(d)
    if name == "riesz":
        return SpectralMeasure.riesz(float(cfg.noise["eta"]), d)
    if name == "bessel":
        return SpectralMeasure.bessel(float(cfg.noise["eta"]), d)
    return SpectralMeasure.delta0(d, mass=float(cfg.noise.get("mass", 1.0)))


def build_coefficient_pair(cfg: ScenarioConfig):
    from .stochastic import CoefficientPair

    def wrap(text):
        node = parse(str(text))
        free = node.free()
        spatial = bool(free - {"t"})
        if not free:
            return float(evaluate(node, {})), False
        d = cfg.grid.dim

        def fn(s, x):
            env = {"t": s}
            if x is not None:
                for j in range(d):
                    env[f"x{j + 1}"] = np.asarray(x[j])
            return evaluate(node, env)

        return fn, spatial

    sigma, sigma_spatial = wrap(cfg.coefficients["sigma"])
    gamma, gamma_spatial = wrap(cfg.coefficients["gamma"])
    return CoefficientPair(sigma=sigma, gamma=gamma, sigma_spatial=sigma_spatial,
                           gamma_spatial=gamma_spatial)


def build_solution_ops(cfg: ScenarioConfig):
    """Assemble the solution operators the scenario asks for.

    x-independent problems run on the multiplier backend; genuinely
    x-dependent coefficients take the operator backend (d = 1 only,
    desk-scale cost).
    """
    from .multiplier import (MultiplierPropagator, MultiplierSolutionOperators,
                             constant_coefficient_system, system_from_first_order)
    from .reduction import HyperbolicOperator, diagonalize, reduce_to_system

    kind = cfg.equation["kind"]
    grid = cfg.grid
    solver = cfg.solver
    horizon = float(solver["horizon"])

    if kind == "weak":
        from .weak import WeakHypConfig, build_weak_system

        wcfg = WeakHypConfig(k=int(cfg.equation["k"]),
                             c=float(cfg.equation["coupling"]),
                             horizon=min(horizon, 1.0))
        system, _ = build_weak_system(wcfg, grid)
        prop = MultiplierPropagator(system, levels=int(solver["levels"]),
                                    quad_nodes=int(solver["quad_nodes"]))
        return MultiplierSolutionOperators(prop)

    if kind == "constant":
        table = {}
        for row in cfg.equation["coefficients"]:
            table[(tuple(int(v) for v in row["alpha"]), int(row["j"]))] = float(row["value"])
        op = HyperbolicOperator(dim=grid.dim, order=int(cfg.equation.get("order", 2)),
                                coeff_table=table)
        system = constant_coefficient_system(op, grid)
        system.horizon = horizon
        prop = MultiplierPropagator(system, levels=int(solver["levels"]),
                                    quad_nodes=int(solver["quad_nodes"]))
        return MultiplierSolutionOperators(prop)

    if kind == "wave":
        op = HyperbolicOperator(dim=grid.dim)
    else:
        d = grid.dim
        a_list = [coefficient_from_expression(s, d) for s in cfg.equation["a"]]
        if len(a_list) == 1 and d > 1:
            a = [[a_list[0] if i == j else 0.0 for j in range(d)] for i in range(d)]
        else:
            a = [[a_list[i * d + j] for j in range(d)] for i in range(d)]
        b = [coefficient_from_expression(s, d) for s in cfg.equation.get("b", ["0"] * d)]
        c = coefficient_from_expression(cfg.equation.get("c", "0"), d)
        op = HyperbolicOperator(dim=d, a=a, b=b, c=c)

    sysd = diagonalize(reduce_to_system(op, grid))
    if sysd.is_multiplier:
        system = system_from_first_order(sysd)
        system.horizon = horizon
        prop = MultiplierPropagator(system, levels=int(solver["levels"]),
                                    quad_nodes=int(solver["quad_nodes"]))
        return MultiplierSolutionOperators(prop)

    from .eikonal import solve_eikonal
    from .propagator import SolutionOperators, build_propagator, residual_w1

    phases = [solve_eikonal(r, grid, horizon_request=horizon,
                            n_steps=int(solver["eikonal_steps"]))
              for r in sysd.roots]
    w1 = residual_w1(sysd, phases)
    prop = build_propagator(w1, levels=int(solver["levels"]),
                            quad_nodes=int(solver["quad_nodes"]),
                            panels=int(solver["panels"]))
    return SolutionOperators(prop, sysd)
