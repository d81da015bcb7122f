"""Problem instances: the linear part A(t), the perturbation f(t, y), the
declared contraction envelope (D, mu, alpha) and default verification grids.

Scenarios are described by JSON documents whose closures are compiled from
expression strings (see :mod:`nhg.expr`). The builtin catalog is written in
the same format, so every builtin round-trips through :func:`save_scenario`
and :func:`load_scenario`.
"""

from __future__ import annotations

import copy
import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from .expr import Expr, ExpressionError, eval_matrix, eval_scalar, eval_vector
from .ode import DEFAULT_TOL, TimeDependentMatrix, integrate_ivp, matvec, opnorm, trace
from .report import VerificationReport

FAMILIES = (
    "uniform",
    "generalized-exponential",
    "mu-stability",
    "nonuniform",
    "generalized-nonuniform",
    "custom",
)

_EXPR = {"type": ["string", "number"]}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["name", "dimension", "A", "f", "beta", "gamma", "D", "mu", "alpha", "r", "T_max"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "dimension": {"type": "integer", "minimum": 1},
        "A": {"type": "array", "items": {"type": "array", "items": _EXPR}},
        "f": {"type": "array", "items": _EXPR},
        "Df": {"type": "array", "items": {"type": "array", "items": _EXPR}},
        "beta": _EXPR,
        "gamma": _EXPR,
        "D": _EXPR,
        "mu": _EXPR,
        "mu_prime": _EXPR,
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "r": {"type": "integer", "minimum": 0},
        "T_max": {"type": "number", "exclusiveMinimum": 0},
        "equilibrium": {"type": "array", "items": {"type": "number"}},
        "equilibrium_candidates": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}},
        },
        "family": {"enum": list(FAMILIES)},
        "grids": {"type": "object"},
    },
}

DEFAULT_GRIDS = {
    "time": {"n": 41},
    "state_box": None,  # defaults to [-3, 3]^n
    "window_d": 2.0,
    "conjugacy": {"samples": 100, "tau_max": 3.0, "t_max": 5.0, "jacobian_samples": 20},
    "certificate": {"K": 1.0, "sigma": 1.0, "nodes": 801},
    "density": {"samples": 200, "t_max": None, "radius": [0.2, 3.0]},
    "transport": {
        "samples": 100,
        "t_max": 4.0,
        "radius": [0.2, 3.0],
        "mc_t": 2.0,
        "mc_box": None,
        "mc_N": 10000,
        "integrability_r": 1.0,
        "integrability_levels": 6,
    },
    "basin": {"N": 1000, "T": 30.0, "delta": 1e-3},
    "domination": {"T": None, "n": 201},
}

MU_ZERO_TOL = 1e-12
EQUILIBRIUM_TOL = 1e-9


class ScenarioError(ValueError):
    """Invalid scenario document or violated scenario invariant."""


class ScenarioWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RateEnvelope:
    """Declared bound ||X(t,s)|| <= D(s) (mu(t)/mu(s))^(-alpha), t >= s."""

    D: Callable
    mu: Callable
    mu_prime: Callable
    alpha: float
    family: str = "custom"

    def log_mu(self, t):
        return np.log(self.mu(t))

    def growth(self, t):
        """mu'(t)/mu(t)."""
        return self.mu_prime(t) / self.mu(t)

    def decay(self, t, s):
        """(mu(t)/mu(s))^(-alpha), computed in log space."""
        return np.exp(-self.alpha * (self.log_mu(t) - self.log_mu(s)))

    def bound(self, t, s):
        return self.D(s) * self.decay(t, s)


@dataclass(frozen=True)
class Nonlinearity:
    f: Callable
    Df: Callable | None
    beta: Callable
    gamma: Callable
    r: int


@dataclass(frozen=True)
class Oracle:
    """Closed forms available for a scenario (builtins only)."""

    transition: Callable | None = None
    flow: Callable | None = None


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    A: TimeDependentMatrix
    nonlinearity: Nonlinearity
    envelope: RateEnvelope
    T_max: float
    grids: dict
    config: dict
    equilibrium: np.ndarray | None = None
    oracle: Oracle | None = None
    load_warnings: tuple = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return self.A.dimension

    @property
    def r(self) -> int:
        return self.nonlinearity.r

    def f(self, t, y):
        return self.nonlinearity.f(t, y)

    def Df(self, t, y):
        if self.nonlinearity.Df is None:
            raise ValueError(f"scenario {self.name!r} has no Df")
        return self.nonlinearity.Df(t, y)

    def g(self, t, y):
        """Right-hand side A(t)y + f(t, y)."""
        return matvec(self.A(t), y) + self.f(t, y)

    def div_g(self, t, y):
        """Divergence tr A(t) + tr Df(t, y)."""
        return trace(self.A(t)) + trace(self.Df(t, y))

    @property
    def is_linear(self) -> bool:
        return all(str(e).strip() in ("0", "0.0") for e in self.config["f"])

    def grid(self, key: str):
        """Grid settings for ``key`` with defaults filled in."""
        default = copy.deepcopy(DEFAULT_GRIDS[key])
        given = self.grids.get(key)
        if isinstance(default, dict):
            default.update(given or {})
            return default
        return default if given is None else given

    def time_grid(self, T: float | None = None) -> np.ndarray:
        T = self.T_max if T is None else T
        n = int(self.grid("time").get("n", 41))
        return np.linspace(0.0, T, n)

    def state_box(self) -> np.ndarray:
        box = self.grid("state_box")
        if box is None:
            box = [[-3.0, 3.0]] * self.n
        return np.asarray(box, dtype=float)

    def with_config(self, keep_oracle: bool | None = None, **changes) -> "Scenario":
        """Rebuild with some document fields replaced (e.g. ``alpha=2``)."""
        cfg = copy.deepcopy(self.config)
        cfg.update(changes)
        oracle = self.oracle
        if oracle is not None:
            if keep_oracle is None:
                keep_oracle = "A" not in changes
            if not keep_oracle:
                oracle = None
            elif "f" in changes:
                oracle = Oracle(transition=oracle.transition)
        return load_scenario(cfg, oracle=oracle)


def _central_diff(fn, h=1e-5):
    def d(t):
        t = np.asarray(t, dtype=float)
        step = h * np.maximum(1.0, np.abs(t))
        return (fn(t + step) - fn(t - step)) / (2 * step)

    return d


def _fd_jacobian(f, n, h=1e-6):
    def Df(t, y):
        y = np.asarray(y, dtype=float)
        cols = []
        for j in range(n):
            step = h * np.maximum(1.0, np.abs(y[..., j]))
            e = np.zeros(n)
            e[j] = 1.0
            yp = y + step[..., None] * e
            ym = y - step[..., None] * e
            cols.append((f(t, yp) - f(t, ym)) / (2 * step[..., None]))
        return np.stack(cols, axis=-1)

    return Df


def _compile(cfg: dict):
    n = cfg["dimension"]
    try:
        A_ex = [[Expr(e, n) for e in row] for row in cfg["A"]]
        f_ex = [Expr(e, n) for e in cfg["f"]]
        Df_ex = [[Expr(e, n) for e in row] for row in cfg["Df"]] if "Df" in cfg else None
        scal = {k: Expr(cfg[k], n) for k in ("beta", "gamma", "D", "mu")}
        mu_p = Expr(cfg["mu_prime"], n) if "mu_prime" in cfg else None
    except ExpressionError as exc:
        raise ScenarioError(f"expression error: {exc}") from None
    if len(A_ex) != n or any(len(row) != n for row in A_ex):
        raise ScenarioError(f"A must be {n}x{n}")
    if len(f_ex) != n:
        raise ScenarioError(f"f must have {n} components")
    if Df_ex is not None and (len(Df_ex) != n or any(len(row) != n for row in Df_ex)):
        raise ScenarioError(f"Df must be {n}x{n}")
    for name, e in [*scal.items(), ("mu_prime", mu_p)]:
        if e is not None and e.state_indices:
            raise ScenarioError(f"{name} must depend on time only")
    for row in A_ex:
        for e in row:
            if e.state_indices:
                raise ScenarioError("A must depend on time only")
    return A_ex, f_ex, Df_ex, scal, mu_p


def load_scenario(config, strict: bool = False, oracle: Oracle | None = None) -> Scenario:
    """Build a :class:`Scenario` from a scenario document (dict, JSON text or path)."""
    if isinstance(config, (str, Path)) and not str(config).lstrip().startswith("{"):
        try:
            config = json.loads(Path(config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON in {config}: {exc}") from None
    elif isinstance(config, str):
        config = json.loads(config)
    cfg = copy.deepcopy(config)
    try:
        jsonschema.validate(cfg, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"schema violation at {where}: {exc.message}") from None

    n = cfg["dimension"]
    A_ex, f_ex, Df_ex, scal, mu_p = _compile(cfg)

    mu = lambda t: eval_scalar(scal["mu"], t)  # noqa: E731
    mu_prime = (lambda t: eval_scalar(mu_p, t)) if mu_p is not None else _central_diff(mu)
    D = lambda t: eval_scalar(scal["D"], t)  # noqa: E731
    envelope = RateEnvelope(D, mu, mu_prime, float(cfg["alpha"]), cfg.get("family", "custom"))

    f = lambda t, y: eval_vector(f_ex, t, y)  # noqa: E731
    if Df_ex is not None:
        Df = lambda t, y: eval_matrix(Df_ex, t, y)  # noqa: E731
    elif cfg["r"] >= 1:
        Df = _fd_jacobian(f, n)
    else:
        Df = None
    nonlin = Nonlinearity(
        f,
        Df,
        lambda t: eval_scalar(scal["beta"], t),
        lambda t: eval_scalar(scal["gamma"], t),
        int(cfg["r"]),
    )
    A = TimeDependentMatrix(lambda t: eval_matrix(A_ex, t), n)
    T_max = float(cfg["T_max"])

    eq = cfg.get("equilibrium")
    if eq is not None:
        if len(eq) != n:
            raise ScenarioError(f"equilibrium must have {n} components")
        eq = np.asarray(eq, dtype=float)

    grid = np.linspace(0.0, T_max, 201)
    mu0 = float(mu(0.0))
    if abs(mu0 - 1.0) > MU_ZERO_TOL:
        raise ScenarioError(f"μ(0) must equal 1 (got {mu0!r})")
    mu_vals = np.asarray(mu(grid))
    dmu = np.asarray(mu_prime(grid))
    if not np.all(np.isfinite(mu_vals)) or np.any(dmu <= 0) or mu_vals[-1] <= mu_vals[0]:
        raise ScenarioError("μ must be strictly increasing on [0, T_max] (μ' > 0 on grid)")

    problems = []
    if np.any(~(np.asarray(D(grid)) > 0)):
        problems.append("D(s) must be positive on [0, T_max]")
    if not np.all(np.isfinite(A(grid))):
        problems.append("A(t) is not finite on [0, T_max]")
    for key in ("beta", "gamma"):
        vals = np.asarray(nonlin.beta(grid) if key == "beta" else nonlin.gamma(grid))
        if np.any(~(vals >= 0)):
            problems.append(f"{key}(t) must be nonnegative on [0, T_max]")
    if strict and problems:
        raise ScenarioError("; ".join(problems))
    for msg in problems:
        warnings.warn(msg, ScenarioWarning, stacklevel=2)

    return Scenario(
        name=cfg["name"],
        A=A,
        nonlinearity=nonlin,
        envelope=envelope,
        T_max=T_max,
        grids=cfg.get("grids", {}),
        config=cfg,
        equilibrium=eq,
        oracle=oracle,
        load_warnings=tuple(problems),
    )


def save_scenario(scenario: Scenario, path=None) -> dict:
    """Return the scenario document; also write it to ``path`` when given."""
    cfg = copy.deepcopy(scenario.config)
    if path is not None:
        Path(path).write_text(json.dumps(cfg, indent=2, sort_keys=True), encoding="utf-8")
    return cfg


def validate_document(path) -> list[str]:
    """Schema + invariant check of a scenario file. Returns problems (empty if valid)."""
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            load_scenario(path)
    except ScenarioError as exc:
        return [str(exc)]
    return [str(w.message) for w in caught if issubclass(w.category, ScenarioWarning)]


# ---------------------------------------------------------------------------
# builtin catalog

GAMMA0 = 0.1


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, s], -1), np.stack([-s, c], -1)], -2)


def _mu_gexp(t):
    return np.exp(t + 0.5 * (1 - np.cos(t)))


_BUILTINS = {
    "uniform-1d": (
        {
            "name": "uniform-1d",
            "dimension": 1,
            "family": "uniform",
            "A": [["-1"]],
            "f": [f"{GAMMA0}*exp(-t)*sin(y_1)"],
            "Df": [[f"{GAMMA0}*exp(-t)*cos(y_1)"]],
            "beta": f"{GAMMA0}*exp(-t)",
            "gamma": f"{GAMMA0}*exp(-t)",
            "D": "1",
            "mu": "exp(t)",
            "mu_prime": "exp(t)",
            "alpha": 1.0,
            "r": 2,
            "T_max": 10.0,
            "equilibrium": [0.0],
            "grids": {"basin": {"N": 1000, "T": 30.0, "delta": 1e-3}},
        },
        Oracle(transition=lambda t, s: np.exp(-(t - s))[..., None, None]),
    ),
    "uniform-2d": (
        {
            "name": "uniform-2d",
            "dimension": 2,
            "family": "uniform",
            "A": [["-1", "0.5"], ["-0.5", "-1"]],
            "f": [f"{GAMMA0}*exp(-t)*sin(y_2)", f"{GAMMA0}*exp(-t)*sin(y_1)"],
            "Df": [
                ["0", f"{GAMMA0}*exp(-t)*cos(y_2)"],
                [f"{GAMMA0}*exp(-t)*cos(y_1)", "0"],
            ],
            "beta": f"{GAMMA0}*sqrt(2)*exp(-t)",
            "gamma": f"{GAMMA0}*exp(-t)",
            "D": "1",
            "mu": "exp(t)",
            "mu_prime": "exp(t)",
            "alpha": 1.0,
            "r": 2,
            "T_max": 10.0,
            "equilibrium": [0.0, 0.0],
            "grids": {
                "basin": {"N": 1000, "T": 30.0, "delta": 1e-3},
                "transport": {"mc_box": [[0.5, 2.0], [-1.0, 1.0]]},
            },
        },
        Oracle(
            transition=lambda t, s: np.exp(-(t - s))[..., None, None]
            * _rot(0.5 * np.asarray(t - s, dtype=float))
        ),
    ),
    "mu-poly": (
        {
            "name": "mu-poly",
            "dimension": 1,
            "family": "mu-stability",
            "A": [["-2/(1+t)"]],
            "f": ["0.5/(1+t)*tanh(y_1)"],
            "Df": [["0.5/(1+t)/cosh(y_1)^2"]],
            "beta": "0.5/(1+t)",
            "gamma": "0.5/(1+t)",
            "D": "1",
            "mu": "1+t",
            "mu_prime": "1",
            "alpha": 2.0,
            "r": 2,
            "T_max": 10.0,
            "equilibrium": [0.0],
            "grids": {
                "basin": {"N": 1000, "T": 200.0, "delta": 1e-2},
                "domination": {"T": 200.0},
            },
        },
        Oracle(transition=lambda t, s: (((1 + t) / (1 + s)) ** -2.0)[..., None, None]),
    ),
    "nonuniform-bv": (
        {
            "name": "nonuniform-bv",
            "dimension": 1,
            "family": "nonuniform",
            "A": [["-3+0.5*(sin(t)+t*cos(t))"]],
            "f": ["0.2*exp(-2*t)*sin(y_1)"],
            "Df": [["0.2*exp(-2*t)*cos(y_1)"]],
            "beta": "0.2*exp(-2*t)",
            "gamma": "0.2*exp(-2*t)",
            "D": "exp(2*0.5*s)",
            "mu": "exp(t)",
            "mu_prime": "exp(t)",
            "alpha": 2.5,
            "r": 2,
            "T_max": 20.0,
            "equilibrium": [0.0],
            "grids": {
                "time": {"n": 61},
                "certificate": {"nodes": 40001},
                "conjugacy": {"tau_max": 1.5, "t_max": 2.5},
                "transport": {"t_max": 2.5, "mc_t": 1.5},
                "basin": {"N": 1000, "T": 20.0, "delta": 1e-3},
            },
        },
        Oracle(
            transition=lambda t, s: np.exp(
                -3.0 * (t - s) + 0.5 * (t * np.sin(t) - s * np.sin(s))
            )[..., None, None]
        ),
    ),
    "lipschitz-decay": (
        {
            "name": "lipschitz-decay",
            "dimension": 2,
            "family": "generalized-exponential",
            "A": [["-(1+0.5*sin(t))", "0"], ["0", "-(1+0.5*sin(t))"]],
            "f": ["0.3/(1+t)*sin(y_2)", "0.3/(1+t)*tanh(y_1)"],
            "Df": [["0", "0.3/(1+t)*cos(y_2)"], ["0.3/(1+t)/cosh(y_1)^2", "0"]],
            "beta": "0.3*sqrt(2)/(1+t)",
            "gamma": "0.3/(1+t)",
            "D": "1",
            "mu": "exp(t+0.5*(1-cos(t)))",
            "mu_prime": "(1+0.5*sin(t))*exp(t+0.5*(1-cos(t)))",
            "alpha": 1.0,
            "r": 2,
            "T_max": 10.0,
            "equilibrium": [0.0, 0.0],
            "grids": {
                "basin": {"N": 1000, "T": 40.0, "delta": 1e-3},
                "transport": {"mc_box": [[0.5, 2.0], [-1.0, 1.0]]},
            },
        },
        Oracle(
            transition=lambda t, s: (_mu_gexp(t) / _mu_gexp(s))[..., None, None] ** -1.0
            * np.eye(2)
        ),
    ),
}

BUILTIN_NAMES = tuple(_BUILTINS)


def builtin_scenario(name: str) -> Scenario:
    try:
        cfg, oracle = _BUILTINS[name]
    except KeyError:
        raise ScenarioError(
            f"unknown builtin scenario {name!r}; choose from {', '.join(BUILTIN_NAMES)}"
        ) from None
    return load_scenario(cfg, strict=True, oracle=oracle)


def _substitute_state(source: str, shift) -> str:
    def repl(m):
        i = int(m.group(1))
        return f"(y_{i}-({float(shift[i - 1])!r}))"

    return re.sub(r"\by_([1-9][0-9]*)\b", repl, str(source))


def shifted_scenario(base: Scenario, ybar) -> Scenario:
    """Move the equilibrium of ``base`` (which must have f(t,0) = 0) to ``ybar``.

    The new perturbation is f(t, y - ybar) - A(t) ybar, so A ybar + f(t, ybar) = 0.
    beta grows by the Frobenius norm of A times |ybar| (an upper bound on the
    2-norm); gamma is unchanged.
    """
    ybar = np.asarray(ybar, dtype=float)
    cfg = copy.deepcopy(base.config)
    n = cfg["dimension"]
    rows = cfg["A"]
    f_new = []
    for i in range(n):
        Ay = "+".join(f"({rows[i][j]})*({float(ybar[j])!r})" for j in range(n))
        f_new.append(f"{_substitute_state(cfg['f'][i], ybar)}-({Ay})")
    cfg["f"] = f_new
    if "Df" in cfg:
        cfg["Df"] = [[_substitute_state(e, ybar) for e in row] for row in cfg["Df"]]
    frob = "sqrt(" + "+".join(f"({e})^2" for row in rows for e in row) + ")"
    cfg["beta"] = f"({cfg['beta']})+{frob}*{float(np.linalg.norm(ybar))!r}"
    cfg["equilibrium"] = [float(v) for v in ybar]
    cfg["name"] = f"{base.name}-shifted"
    oracle = Oracle(transition=base.oracle.transition) if base.oracle else None
    return load_scenario(cfg, oracle=oracle)


# ---------------------------------------------------------------------------
# hypothesis checks living at the scenario level


def check_perturbation_bounds(scenario: Scenario, n_samples=10_000, seed=0, box_scale=2.0):
    """Sampled evidence for |f| <= beta and the Lipschitz bound with gamma."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    box = scenario.state_box() * box_scale
    n = scenario.n
    t = rng.uniform(0.0, scenario.T_max, n_samples)
    y = rng.uniform(box[:, 0], box[:, 1], (n_samples, n))
    yb = rng.uniform(box[:, 0], box[:, 1], (n_samples, n))
    fy = scenario.f(t, y)
    fyb = scenario.f(t, yb)
    beta = scenario.nonlinearity.beta(t)
    gamma = scenario.nonlinearity.gamma(t)
    size = np.linalg.norm(fy, axis=-1)
    lip = np.linalg.norm(fy - fyb, axis=-1)
    dist = np.linalg.norm(y - yb, axis=-1)
    slack = 1e-12
    v_beta = int(np.sum(size > beta * (1 + slack) + slack))
    v_gamma = int(np.sum(lip > gamma * dist * (1 + slack) + slack))
    return VerificationReport(
        op="check_perturbation_bounds",
        scenario=scenario.name,
        passed=v_beta == 0 and v_gamma == 0,
        margins={
            "beta_violations": v_beta,
            "gamma_violations": v_gamma,
            "min_beta_slack": float(np.min(beta - size)),
            "min_gamma_slack": float(np.min(gamma * dist - lip)),
        },
        params={"box_scale": box_scale},
        samples=n_samples,
        seed=seed,
        notes=["(P2) bounds are sampled evidence, not a proof"],
    )


def _equilibrium_residual(scenario, ybar, times):
    yb = np.broadcast_to(ybar, (len(times), scenario.n))
    return np.linalg.norm(scenario.g(times, yb), axis=-1)


def verify_equilibrium(scenario: Scenario, ybar, candidates=None, tol=EQUILIBRIUM_TOL):
    """Residual and integral-form checks that ``ybar`` is an equilibrium."""
    ybar = np.asarray(ybar, dtype=float)
    times = scenario.time_grid()
    res = _equilibrium_residual(scenario, ybar, times)
    max_res = float(np.max(res))

    # ybar = X(t,0) ybar + int_0^t X(t,s) f(s, ybar) ds  <=>  u' = A u + f(s, ybar), u(0) = ybar
    def field(t, u):
        return scenario.A(t) @ u + scenario.f(t, ybar)

    traj = integrate_ivp(field, 0.0, ybar, times[-1], DEFAULT_TOL, t_eval=times)
    idx = np.searchsorted(traj.t, times)
    integral_dev = float(np.max(np.linalg.norm(traj.y[idx] - ybar, axis=-1)))
    integral_tol = 1e-7 * max(1.0, float(np.linalg.norm(ybar)))

    if candidates is None:
        candidates = scenario.config.get("equilibrium_candidates", [])
    cand_rows = []
    unique = True
    for c in candidates:
        c = np.asarray(c, dtype=float)
        r = float(np.max(_equilibrium_residual(scenario, c, times)))
        dist = float(np.linalg.norm(c - ybar))
        is_eq = r < tol
        if is_eq and dist >= 1e-6:
            unique = False
        cand_rows.append({"candidate": c.tolist(), "max_residual": r, "distance": dist,
                          "accepted": is_eq})
    passed = max_res < tol and integral_dev < integral_tol and unique
    return VerificationReport(
        op="verify_equilibrium",
        scenario=scenario.name,
        passed=passed,
        margins={
            "max_residual": max_res,
            "residual_at_t0": float(res[0]),
            "integral_deviation": integral_dev,
            "unique": unique,
        },
        params={"equilibrium": ybar.tolist(), "tol": tol, "integral_tol": integral_tol},
        samples=len(times),
        table=cand_rows,
    )


def f_vanishes_at_origin(scenario: Scenario, tol=1e-14) -> bool:
    times = scenario.time_grid()
    return bool(np.max(np.abs(scenario.f(times, np.zeros((len(times), scenario.n))))) <= tol)


def A_norm_bound(scenario: Scenario) -> float:
    times = scenario.time_grid()
    return float(np.max(opnorm(scenario.A(times))))
