"""Checks of the contraction envelope and the perturbation integrals.

Given a scenario with declared (D, mu, alpha) this module measures

* the envelope ratio r(t,s) = |X(t,s)| (mu(t)/mu(s))^alpha / D(s) on grid pairs,
* p(t) = int_0^t D(s) (mu(t)/mu(s))^-alpha beta(s) ds and q(t) likewise with
  gamma, and their suprema over [0, T],
* the window constant c = max |X(t,s)| over pairs with mu(t) <= d mu(s),
* the domination expression mu(t)^-alpha exp(int_0^t D gamma).

p and q are defined as suprema over all t >= 0; on a finite horizon they are
read as suprema over [0, T] and every report says so.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .ode import DEFAULT_TOL, PropagatorTable, opnorm, transition_matrix
from .quadrature import adaptive_simpson, cumulative_integral
from .report import VerificationReport
from .scenario import Scenario, check_perturbation_bounds

RATIO_TOL = 1e-6
QUAD_TOL = 1e-10
PQ_STEP = 0.05
DOMINATION_TAIL = 0.2
DOMINATION_DROP = 1e-3
HORIZON_NOTE = "p and q are suprema over t in [0, T], not over all t >= 0"
NORM_NOTE = "matrix norm: operator 2-norm (largest singular value)"


@dataclass
class ContractionReport:
    """Everything the contraction stage measured, with one verdict per hypothesis."""

    scenario: str
    max_ratio: float
    argmax: tuple
    p: float
    q: float
    window_c: float | None
    domination_tail: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    reports: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def failed_hypotheses(self) -> list[str]:
        return [k for k, v in self.verdicts.items() if not v]


def verify_contraction(scenario: Scenario, grid=None, table: PropagatorTable | None = None,
                       tol=DEFAULT_TOL, ratio_tol=RATIO_TOL) -> VerificationReport:
    """Envelope ratio max over (t, s) pairs, t >= s.

    ``grid`` is either a 1-d array of times (all ordered pairs are used, via a
    propagator table) or an (N, 2) array of explicit (t, s) pairs.
    """
    env = scenario.envelope
    if grid is not None and np.ndim(grid) == 2:
        pairs = np.asarray(grid, dtype=float)
        t, s = pairs[:, 0], pairs[:, 1]
        if np.any(t < s):
            raise ValueError("pairs must satisfy t >= s")
        norms = np.atleast_1d(opnorm(transition_matrix(scenario.A, s, t, tol)))
    else:
        if table is None:
            times = scenario.time_grid() if grid is None else np.asarray(grid, dtype=float)
            table = PropagatorTable.build(scenario.A, times, tol)
        times = table.grid
        jj, ii = np.tril_indices(len(times))  # jj >= ii
        t, s = times[jj], times[ii]
        norms = np.atleast_1d(opnorm(table.blocks[jj, ii]))
    log_ratio = np.log(norms) + env.alpha * (env.log_mu(t) - env.log_mu(s)) - np.log(env.D(s))
    ratio = np.exp(log_ratio)
    k = int(np.argmax(ratio))
    max_ratio = float(ratio[k])
    return VerificationReport(
        op="verify_contraction",
        scenario=scenario.name,
        passed=max_ratio <= 1.0 + ratio_tol,
        margins={
            "max_ratio": max_ratio,
            "argmax_t": float(t[k]),
            "argmax_s": float(s[k]),
            "min_ratio": float(np.min(ratio)),
        },
        params={"ratio_tol": ratio_tol, "integrator_tol": tol, "alpha": env.alpha,
                "norm": "operator 2-norm"},
        samples=len(ratio),
        notes=[NORM_NOTE],
        table=[{"t": float(a), "s": float(b), "ratio": float(r)} for a, b, r in zip(t, s, ratio)],
    )


def _running_sup(scenario: Scenario, weight, T, quad_tol=QUAD_TOL, step=PQ_STEP):
    """sup over t in [0, T] of I(t) = int_0^t D(s) (mu(t)/mu(s))^-alpha weight(s) ds.

    I is accumulated panel by panel through
    I(t_{k+1}) = (mu(t_k)/mu(t_{k+1}))^alpha I(t_k) + int_{t_k}^{t_{k+1}} ...,
    which never forms mu(t)/mu(s) for distant t and s. The best grid value is
    then refined by a bounded scalar search on the neighbouring panels.
    """
    env = scenario.envelope
    T = float(T)
    n_steps = max(1, int(np.ceil(T / step - 1e-9)))
    grid = np.minimum(np.arange(n_steps + 1) * step, T)
    grid[-1] = T

    def panel(a, b):
        lb = float(env.log_mu(b))
        return adaptive_simpson(
            lambda s: float(env.D(s)) * np.exp(-env.alpha * (lb - float(env.log_mu(s))))
            * float(weight(s)),
            a, b, quad_tol,
        )

    values = np.zeros(len(grid))
    for k in range(1, len(grid)):
        decay = float(env.decay(grid[k], grid[k - 1]))
        values[k] = decay * values[k - 1] + panel(grid[k - 1], grid[k])

    k = int(np.argmax(values))
    best_t, best = float(grid[k]), float(values[k])
    lo_k = max(k - 1, 0)
    hi_k = min(k + 1, len(grid) - 1)
    if hi_k > lo_k and best > 0:
        base_t, base_v = grid[lo_k], values[lo_k]

        def neg(t):
            return -(float(env.decay(t, base_t)) * base_v + panel(base_t, t))

        res = minimize_scalar(neg, bounds=(grid[lo_k], grid[hi_k]), method="bounded",
                              options={"xatol": 1e-10})
        if -res.fun > best:
            best_t, best = float(res.x), float(-res.fun)
    tail = float(env.D(T) * weight(T) / (env.alpha * env.growth(T)))
    return best, best_t, grid, values, tail


def compute_pq(scenario: Scenario, T: float | None = None, quad_tol=QUAD_TOL,
               step=PQ_STEP) -> VerificationReport:
    """p and q as suprema over [0, T]; fails when q >= 1."""
    T = scenario.T_max if T is None else float(T)
    if T > scenario.T_max + 1e-12:
        raise ValueError(f"T = {T} exceeds the scenario horizon {scenario.T_max}")
    nl = scenario.nonlinearity
    p, p_at, grid, p_vals, p_tail = _running_sup(scenario, nl.beta, T, quad_tol, step)
    q, q_at, _, q_vals, q_tail = _running_sup(scenario, nl.gamma, T, quad_tol, step)
    rows = [{"t": float(t), "p_t": float(a), "q_t": float(b)}
            for t, a, b in zip(grid, p_vals, q_vals)]
    notes = [HORIZON_NOTE,
             "tail estimates D(T) w(T) / (alpha mu'(T)/mu(T)) bound the level the running "
             "integrals approach if the integrand weight stays near its value at T"]
    if q >= 1:
        notes.append(f"(P4) violated: q = {round(q, 6)} ≥ 1")
    return VerificationReport(
        op="compute_pq",
        scenario=scenario.name,
        passed=bool(np.isfinite(p) and q < 1),
        margins={"p": p, "q": q, "p_argmax_t": p_at, "q_argmax_t": q_at,
                 "p_tail_estimate": p_tail, "q_tail_estimate": q_tail},
        params={"T": T, "quad_tol": quad_tol, "grid_step": step,
                "quadrature": "adaptive Simpson"},
        samples=len(grid),
        notes=notes,
        table=rows,
    )


def _window_edges(scenario: Scenario, starts, d):
    """For each s, the t >= s with mu(t) = d mu(s), capped at T_max."""
    env = scenario.envelope
    T = scenario.T_max
    target = env.log_mu(starts) + np.log(d)
    edges = np.full(len(starts), T)
    for k, s in enumerate(starts):
        if float(env.log_mu(T)) > target[k]:
            edges[k] = brentq(lambda t: float(env.log_mu(t)) - target[k], s, T, xtol=1e-13)
    return edges


def check_window_bound(scenario: Scenario, d: float | None = None, grid=None,
                       table: PropagatorTable | None = None, tol=DEFAULT_TOL) -> VerificationReport:
    """c = max |X(t,s)| over pairs t > s with mu(t) <= d mu(s).

    The pairs are the admissible grid pairs plus, for every grid s, the
    window edge t with mu(t) = d mu(s).
    """
    d = float(scenario.grid("window_d") if d is None else d)
    if d < 1:
        raise ValueError("d must be >= 1")
    if table is None:
        times = scenario.time_grid() if grid is None else np.asarray(grid, dtype=float)
        table = PropagatorTable.build(scenario.A, times, tol)
    times = table.grid
    jj, ii = np.tril_indices(len(times), -1)
    env = scenario.envelope
    admissible = env.log_mu(times[jj]) - env.log_mu(times[ii]) <= np.log(d) + 1e-15
    starts = times[:-1]
    edges = _window_edges(scenario, starts, d)
    edge_norms = np.atleast_1d(opnorm(transition_matrix(scenario.A, starts, edges, tol)))
    norms = np.atleast_1d(opnorm(table.blocks[jj[admissible], ii[admissible]]))
    c = float(max(np.max(edge_norms), np.max(norms) if len(norms) else 0.0))
    return VerificationReport(
        op="check_window_bound",
        scenario=scenario.name,
        passed=bool(np.isfinite(c)),
        margins={"c": c, "admissible_pairs": int(np.sum(admissible)),
                 "edge_pairs": len(starts)},
        params={"d": d, "integrator_tol": tol},
        samples=int(np.sum(admissible)) + len(starts),
    )


def domination_values(scenario: Scenario, times, quad_tol=QUAD_TOL) -> np.ndarray:
    """mu(t)^-alpha exp(int_0^t D gamma), evaluated in log space."""
    env, nl = scenario.envelope, scenario.nonlinearity
    times = np.asarray(times, dtype=float)
    grid = np.concatenate([[0.0], times]) if times[0] > 0 else times
    acc = cumulative_integral(lambda s: float(env.D(s) * nl.gamma(s)), grid, quad_tol)
    if times[0] > 0:
        acc = acc[1:]
    return np.exp(-env.alpha * env.log_mu(times) + acc)


def check_domination(scenario: Scenario, times=None, quad_tol=QUAD_TOL) -> VerificationReport:
    """Pass iff the last 20% of values decrease monotonically and the final
    value is below 1e-3 of the first."""
    if times is None:
        cfg = scenario.grid("domination")
        T = scenario.T_max if cfg["T"] is None else float(cfg["T"])
        times = np.linspace(0.0, T, int(cfg["n"]))
    times = np.asarray(times, dtype=float)
    vals = domination_values(scenario, times, quad_tol)
    start = int(np.floor(len(times) * (1 - DOMINATION_TAIL)))
    tail = vals[start:]
    decreasing = bool(np.all(np.diff(tail) < 0))
    ratio = float(vals[-1] / vals[0])
    return VerificationReport(
        op="check_domination",
        scenario=scenario.name,
        passed=decreasing and ratio < DOMINATION_DROP,
        margins={"final_over_initial": ratio, "tail_decreasing": decreasing,
                 "final_value": float(vals[-1])},
        params={"tail_fraction": DOMINATION_TAIL, "required_drop": DOMINATION_DROP,
                "T": float(times[-1]), "quad_tol": quad_tol},
        samples=len(times),
        table=[{"t": float(t), "value": float(v)} for t, v in zip(times, vals)],
    )


def contraction_report(scenario: Scenario, tol=DEFAULT_TOL, T: float | None = None,
                       seed: int = 0) -> ContractionReport:
    """Run every hypothesis check and collect verdicts (P1)-(P4), window, domination."""
    table = PropagatorTable.build(scenario.A, scenario.time_grid(), tol)
    ratio = verify_contraction(scenario, table=table, tol=tol)
    bounds = check_perturbation_bounds(scenario, seed=seed)
    pq = compute_pq(scenario, T)
    window = check_window_bound(scenario, table=table, tol=tol)
    dom = check_domination(scenario)
    verdicts = {
        "(P1)": ratio.passed,
        "(P2)": bounds.passed,
        "(P3)": bool(np.isfinite(pq.margins["p"])),
        "(P4)": pq.margins["q"] < 1,
        "window": window.passed,
        "domination": dom.passed,
    }
    return ContractionReport(
        scenario=scenario.name,
        max_ratio=ratio.margins["max_ratio"],
        argmax=(ratio.margins["argmax_t"], ratio.margins["argmax_s"]),
        p=pq.margins["p"],
        q=pq.margins["q"],
        window_c=window.margins["c"],
        domination_tail=[(r["t"], r["value"]) for r in dom.table[-max(1, len(dom.table) // 5):]],
        verdicts=verdicts,
        reports=[ratio, bounds, pq, window, dom],
    )
