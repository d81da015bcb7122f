"""The maps H(t, .) and G(t, .) between the linear and the perturbed flows.

For a point eta at time t, G(t, eta) = eta + w(t) where w solves

    w' = A(s) w - f(s, y(s, t, eta)),   w(0) = 0,

along the perturbed solution through (t, eta). For a point xi,
H(t, xi) = xi + z(t) where z solves

    z' = A(s) z + f(s, x(s, t, xi) + z),   z(0) = 0,

along the linear solution x(s, t, xi) = X(s, t) xi. Both are evaluated by a
backward solve to s = 0 followed by a joint forward solve; all evaluations
are batched over points.

The Jacobian of G is X(t, 0) dy(0, t, eta)/deta. Two independent routes are
kept as cross-checks: the integral form I - int_0^t X(t,s) Df dy/deta ds and
(for G itself) a Gauss-Legendre quadrature of -int_0^t X(t,s) f(s, y) ds.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .contraction import check_domination, compute_pq
from .ode import (
    DEFAULT_TOL,
    PropagatorTable,
    _as_batch,
    flow_and_jacobian,
    linear_flow,
    matmul,
    matvec,
    nonlinear_flow,
    solve_batch,
    transition_matrix,
)
from .quadrature import cumulative_integral
from .report import VerificationReport
from .scenario import Scenario

RESIDUAL_TOL = 1e-5
BOUND_SLACK = 1e-6
EQUILIBRIUM_SLACK = 1e-6
CACHE_DECIMALS = 12
CHUNK = 2048
FINITE_HORIZON_NOTE = "finite-horizon certificate: properties hold at the sampled times only"


class OrientationError(ArithmeticError):
    """det dG/deta <= 0: G(t, .) would not preserve orientation."""


class HorizonError(ValueError):
    """Requested time outside [0, T_max]."""


def _det(J):
    n = J.shape[-1]
    if n == 1:
        return J[..., 0, 0].copy()
    if n == 2:
        return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return np.linalg.det(J)


class ConjugacyMap:
    """Batched evaluators for G, H and the Jacobian of G.

    Results are cached per (kind, t, point), rounded to 1e-12. Every sample
    is integrated with its own step control, so a cached value is bit-for-bit
    what a fresh evaluation would return.
    """

    def __init__(self, scenario: Scenario, tol: float = DEFAULT_TOL, cache: bool = True,
                 workers: int = 1, chunk: int = CHUNK):
        self.scenario = scenario
        self.tol = tol
        self.workers = max(1, int(workers))
        self.chunk = int(chunk)
        self._cache = {} if cache else None
        self._lock = threading.Lock()

    # -- plumbing -----------------------------------------------------------

    def _check_horizon(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.scenario.T_max + 1e-12):
            raise HorizonError(
                f"t must lie in [0, {self.scenario.T_max}] (got range "
                f"[{float(np.min(t))}, {float(np.max(t))}])"
            )

    def _key(self, kind, t, point):
        return (kind, round(float(t), CACHE_DECIMALS),
                tuple(round(float(v), CACHE_DECIMALS) for v in point))

    def _evaluate(self, kind, compute, t, points):
        """Run ``compute(t, points)`` on cache misses, chunked and optionally threaded."""
        n = self.scenario.n
        single, N, pts = _as_batch(t, t, points, n)
        tt = np.broadcast_to(np.asarray(t, dtype=float), (N,))
        self._check_horizon(tt)
        results = [None] * N
        if self._cache is not None:
            keys = [self._key(kind, tt[i], pts[i]) for i in range(N)]
            with self._lock:
                for i, k in enumerate(keys):
                    results[i] = self._cache.get(k)
        miss = np.array([i for i in range(N) if results[i] is None], dtype=int)
        if len(miss):
            chunks = [miss[i:i + self.chunk] for i in range(0, len(miss), self.chunk)]
            run = lambda idx: compute(tt[idx], pts[idx])  # noqa: E731
            if self.workers > 1 and len(chunks) > 1:
                with ThreadPoolExecutor(self.workers) as pool:
                    outs = list(pool.map(run, chunks))
            else:
                outs = [run(c) for c in chunks]
            for idx, out in zip(chunks, outs):
                for j, i in enumerate(idx):
                    results[i] = tuple(o[j] for o in out)
            if self._cache is not None:
                with self._lock:
                    for i in miss:
                        self._cache[keys[i]] = results[i]
        stacked = tuple(np.stack([r[m] for r in results]) for m in range(len(results[0])))
        if single:
            stacked = tuple(s[0] for s in stacked)
        return stacked

    # -- raw batched computations ------------------------------------------

    def _G_raw(self, t, eta):
        sc = self.scenario
        n = sc.n
        y0 = solve_batch(sc.g, t, 0.0, eta, self.tol)

        def rhs(s, state):
            y, w = state[:, :n], state[:, n:]
            fy = sc.f(s, y)
            return np.concatenate([matvec(sc.A(s), y) + fy, matvec(sc.A(s), w) - fy], axis=1)

        out = solve_batch(rhs, 0.0, t, np.concatenate([y0, np.zeros_like(y0)], axis=1), self.tol)
        return (eta + out[:, n:],)

    def _H_raw(self, t, xi):
        sc = self.scenario
        n = sc.n
        x0 = linear_flow(sc.A, t, np.zeros_like(t), xi, self.tol)

        def rhs(s, state):
            x, z = state[:, :n], state[:, n:]
            A = sc.A(s)
            return np.concatenate([matvec(A, x), matvec(A, z) + sc.f(s, x + z)], axis=1)

        out = solve_batch(rhs, 0.0, t, np.concatenate([x0, np.zeros_like(x0)], axis=1), self.tol)
        return (xi + out[:, n:],)

    def _J_raw(self, t, eta):
        sc = self.scenario
        _, Jback = flow_and_jacobian(sc, t, eta, np.zeros_like(t), self.tol)
        X = transition_matrix(sc.A, np.zeros_like(t), t, self.tol)
        J = matmul(X, Jback)
        return (J, _det(J))

    def _GJ_raw(self, t, eta):
        """G and its Jacobian from one backward variational solve and one
        forward solve carrying y, w and X(s, 0) together."""
        sc = self.scenario
        n = sc.n
        N = len(t)
        y0, Jback = flow_and_jacobian(sc, t, eta, np.zeros_like(t), self.tol)

        def rhs(s, state):
            y, w = state[:, :n], state[:, n:2 * n]
            Phi = state[:, 2 * n:].reshape(-1, n, n)
            A = sc.A(s)
            fy = sc.f(s, y)
            return np.concatenate([matvec(A, y) + fy, matvec(A, w) - fy,
                                   matmul(A, Phi).reshape(len(y), -1)], axis=1)

        state0 = np.concatenate([y0, np.zeros_like(y0), np.tile(np.eye(n).ravel(), (N, 1))],
                                axis=1)
        out = solve_batch(rhs, 0.0, t, state0, self.tol)
        J = matmul(out[:, 2 * n:].reshape(N, n, n), Jback)
        return (eta + out[:, n:2 * n], J, _det(J))

    def _J_integral_raw(self, t, eta):
        sc = self.scenario
        n = sc.n
        y0, Jback = flow_and_jacobian(sc, t, eta, np.zeros_like(t), self.tol)
        N = len(t)

        def rhs(s, state):
            y = state[:, :n]
            V = state[:, n:n + n * n].reshape(-1, n, n)
            W = state[:, n + n * n:].reshape(-1, n, n)
            A, Df = sc.A(s), sc.Df(s, y)
            dV = matmul(A + Df, V)
            dW = matmul(A, W) - matmul(Df, V)
            return np.concatenate(
                [sc.g(s, y), dV.reshape(len(y), -1), dW.reshape(len(y), -1)], axis=1
            )

        state0 = np.concatenate(
            [y0, Jback.reshape(N, -1), np.zeros((N, n * n))], axis=1
        )
        out = solve_batch(rhs, 0.0, t, state0, self.tol)
        W = out[:, n + n * n:].reshape(N, n, n)
        return (np.eye(n) + W,)

    # -- public evaluators ---------------------------------------------------

    def G(self, t, eta):
        """G(t, eta); ``t`` scalar or (N,), ``eta`` (n,) or (N, n)."""
        return self._evaluate("G", self._G_raw, t, eta)[0]

    def H(self, t, xi):
        """H(t, xi); shapes as for :meth:`G`."""
        return self._evaluate("H", self._H_raw, t, xi)[0]

    def jacobian_G(self, t, eta, check_orientation: bool = True):
        """(J, det J) with J = X(t, 0) dy(0, t, eta)/deta."""
        if self.scenario.r < 1:
            raise ValueError(f"scenario {self.scenario.name!r} declares r = 0; Df unavailable")
        J, det = self._evaluate("J", self._J_raw, t, eta)
        if check_orientation and np.any(np.asarray(det) <= 0):
            bad = float(np.min(det))
            raise OrientationError(f"det dG/deta = {bad:.3e} <= 0: orientation not preserved")
        return J, det

    def G_and_jacobian(self, t, eta, check_orientation: bool = True):
        """(G, J, det J) in a single pass; used where all three are needed."""
        if self.scenario.r < 1:
            raise ValueError(f"scenario {self.scenario.name!r} declares r = 0; Df unavailable")
        G, J, det = self._evaluate("GJ", self._GJ_raw, t, eta)
        if check_orientation and np.any(np.asarray(det) <= 0):
            bad = float(np.min(det))
            raise OrientationError(f"det dG/deta = {bad:.3e} <= 0: orientation not preserved")
        return G, J, det

    def jacobian_G_integral_form(self, t, eta):
        """I - int_0^t X(t,s) Df(s, y(s,t,eta)) dy(s,t,eta)/deta ds, column by column."""
        return self._evaluate("Jint", self._J_integral_raw, t, eta)[0]

    def G_quadrature(self, t, eta, panels: int = 16, order: int = 10):
        """eta - int_0^t X(t,s) f(s, y(s,t,eta)) ds by composite Gauss-Legendre.

        Nodes y(s_k, t, eta) and X(t, s_k) come from separate solves, so this
        route shares no trajectory with :meth:`G`.
        """
        sc = self.scenario
        n = sc.n
        single, N, pts = _as_batch(t, t, eta, n)
        tt = np.broadcast_to(np.asarray(t, dtype=float), (N,))
        self._check_horizon(tt)
        xg, wg = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(0.0, 1.0, panels + 1)
        frac = ((edges[:-1, None] + edges[1:, None]) / 2
                + (edges[1:, None] - edges[:-1, None]) / 2 * xg[None, :]).ravel()
        wfrac = ((edges[1:, None] - edges[:-1, None]) / 2 * wg[None, :]).ravel()
        m = len(frac)
        s_nodes = (tt[:, None] * frac[None, :]).ravel()
        t_rep = np.repeat(tt, m)
        y_nodes = nonlinear_flow(sc, t_rep, s_nodes, np.repeat(pts, m, axis=0), self.tol)
        X = transition_matrix(sc.A, s_nodes, t_rep, self.tol)
        integrand = matvec(X, sc.f(s_nodes, y_nodes)).reshape(N, m, n)
        integral = tt[:, None] * np.einsum("k,nki->ni", wfrac, integrand)
        out = pts - integral
        return out[0] if single else out

    def picard_crosscheck(self, t: float, xi, nodes: int = 401, iterations: int = 8):
        """Iterate z -> int_0^s X(s,r) f(r, x(r) + z(r)) dr on a trapezoid grid.

        Returns the final z(t), the successive sup-norm Cauchy differences and
        their ratios; a contraction shows ratios at or below q.
        """
        sc = self.scenario
        xi = np.asarray(xi, dtype=float)
        grid = np.linspace(0.0, float(t), nodes)
        table = PropagatorTable.build(sc.A, grid, self.tol)
        # x(s, t, xi) = X(s, t) xi from backward linear solves
        x = linear_flow(sc.A, np.full(nodes, float(t)), grid, np.broadcast_to(xi, (nodes, sc.n)),
                        self.tol)
        h = grid[1] - grid[0] if nodes > 1 else 0.0
        z = np.zeros((nodes, sc.n))
        diffs = []
        for _ in range(iterations):
            F = sc.f(grid, x + z)
            new = np.zeros_like(z)
            for j in range(1, nodes):
                vals = matvec(table.blocks[j, : j + 1], F[: j + 1])
                new[j] = h * (vals.sum(axis=0) - 0.5 * (vals[0] + vals[j]))
            diffs.append(float(np.max(np.linalg.norm(new - z, axis=-1))))
            z = new
        ratios = [b / a for a, b in zip(diffs[:-1], diffs[1:]) if a > 1e-14]
        return {"z_t": z[-1], "differences": diffs, "ratios": ratios}

    def clear_cache(self):
        if self._cache is not None:
            with self._lock:
                self._cache.clear()


def map_G(scenario: Scenario, t, eta, tol=DEFAULT_TOL):
    return ConjugacyMap(scenario, tol, cache=False).G(t, eta)


def map_H(scenario: Scenario, t, xi, tol=DEFAULT_TOL):
    return ConjugacyMap(scenario, tol, cache=False).H(t, xi)


def jacobian_G(scenario: Scenario, t, eta, tol=DEFAULT_TOL):
    return ConjugacyMap(scenario, tol, cache=False).jacobian_G(t, eta)


def sample_conjugacy_points(scenario: Scenario, count: int, seed: int, tau_max=None, t_max=None):
    """(tau, point, t) samples: tau uniform in [0, tau_max], t in [tau, t_max],
    points uniform in the state box."""
    cfg = scenario.grid("conjugacy")
    tau_max = float(cfg["tau_max"] if tau_max is None else tau_max)
    t_max = float(cfg["t_max"] if t_max is None else t_max)
    t_max = min(t_max, scenario.T_max)
    tau_max = min(tau_max, t_max)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    box = scenario.state_box()
    tau = rng.uniform(0.0, tau_max, count)
    t = tau + rng.uniform(0.0, 1.0, count) * (t_max - tau)
    pts = rng.uniform(box[:, 0], box[:, 1], (count, scenario.n))
    return tau, pts, t


def verify_equivalence(scenario: Scenario, samples=None, tol=DEFAULT_TOL,
                       residual_tol=RESIDUAL_TOL, seed: int = 0, cmap: ConjugacyMap | None = None):
    """Roundtrip and conjugation residuals (a)-(d) plus det J at each sample."""
    cmap = cmap or ConjugacyMap(scenario, tol)
    if samples is None:
        samples = sample_conjugacy_points(scenario, scenario.grid("conjugacy")["samples"], seed)
    tau, pts, t = (np.asarray(v, dtype=float) for v in samples)
    pts = pts.reshape(len(tau), scenario.n)

    G_tau = cmap.G(tau, pts)
    H_tau = cmap.H(tau, pts)
    res_a = np.linalg.norm(cmap.H(tau, G_tau) - pts, axis=-1)
    res_b = np.linalg.norm(cmap.G(tau, H_tau) - pts, axis=-1)
    x_t = linear_flow(scenario.A, tau, t, pts, tol)
    y_t = nonlinear_flow(scenario, tau, t, H_tau, tol)
    res_c = np.linalg.norm(cmap.H(t, x_t) - y_t, axis=-1)
    y_eta = nonlinear_flow(scenario, tau, t, pts, tol)
    res_d = np.linalg.norm(cmap.G(t, y_eta) - linear_flow(scenario.A, tau, t, G_tau, tol), axis=-1)
    if scenario.r >= 1:
        _, det = cmap.jacobian_G(tau, pts, check_orientation=False)
    else:
        det = np.full(len(tau), np.nan)

    rows = []
    for k in range(len(tau)):
        row = {"t": float(t[k]), "tau": float(tau[k])}
        for i in range(scenario.n):
            row[f"point_{i + 1}"] = float(pts[k, i])
        row.update({"residual_a": float(res_a[k]), "residual_b": float(res_b[k]),
                    "residual_c": float(res_c[k]), "residual_d": float(res_d[k]),
                    "det_J": float(det[k])})
        rows.append(row)
    worst = {k: float(np.max(v)) for k, v in
             (("max_residual_a", res_a), ("max_residual_b", res_b),
              ("max_residual_c", res_c), ("max_residual_d", res_d))}
    det_ok = bool(np.all(det > 0)) if scenario.r >= 1 else True
    passed = max(worst.values()) < residual_tol and det_ok
    return VerificationReport(
        op="verify_equivalence",
        scenario=scenario.name,
        passed=passed,
        margins={**worst, "min_det_J": float(np.min(det)), "orientation_preserved": det_ok},
        params={"residual_tol": residual_tol, "integrator_tol": tol},
        samples=len(tau),
        seed=seed,
        notes=[FINITE_HORIZON_NOTE],
        table=rows,
    )


def check_boundedness(scenario: Scenario, samples=None, tol=DEFAULT_TOL, seed: int = 0,
                      cmap: ConjugacyMap | None = None, p: float | None = None):
    """sup |H(t,xi) - xi| and sup |G(t,eta) - eta| against p + 1e-6."""
    cmap = cmap or ConjugacyMap(scenario, tol)
    if samples is None:
        samples = sample_conjugacy_points(scenario, scenario.grid("conjugacy")["samples"], seed)
    _, pts, t = (np.asarray(v, dtype=float) for v in samples)
    pts = pts.reshape(len(t), scenario.n)
    T = float(np.max(t)) if len(t) else scenario.T_max
    if p is None:
        p = compute_pq(scenario, max(T, 1e-9)).margins["p"]
    dH = np.linalg.norm(cmap.H(t, pts) - pts, axis=-1)
    dG = np.linalg.norm(cmap.G(t, pts) - pts, axis=-1)
    sup_H, sup_G = float(np.max(dH)), float(np.max(dG))
    return VerificationReport(
        op="check_boundedness",
        scenario=scenario.name,
        passed=sup_H <= p + BOUND_SLACK and sup_G <= p + BOUND_SLACK,
        margins={"sup_H_minus_id": sup_H, "sup_G_minus_id": sup_G, "p": p,
                 "slack_H": p + BOUND_SLACK - sup_H, "slack_G": p + BOUND_SLACK - sup_G},
        params={"bound_slack": BOUND_SLACK, "p_horizon": T},
        samples=len(t),
        seed=seed,
        notes=["p is the supremum over [0, T] with T the largest sampled time"],
    )


def check_jacobian(scenario: Scenario, samples=None, tol=DEFAULT_TOL, seed: int = 0,
                   h: float = 1e-5, rel_tol: float = 1e-4, cmap: ConjugacyMap | None = None):
    """Variational Jacobian of G against central differences and the integral form."""
    cmap = cmap or ConjugacyMap(scenario, tol)
    n = scenario.n
    if samples is None:
        count = scenario.grid("conjugacy")["jacobian_samples"]
        tau, pts, _ = sample_conjugacy_points(scenario, count, seed)
        samples = (tau, pts)
    t, pts = (np.asarray(v, dtype=float) for v in samples[:2])
    pts = pts.reshape(len(t), n)
    N = len(t)
    J, det = cmap.jacobian_G(t, pts, check_orientation=False)
    shifted = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        shifted += [pts + e, pts - e]
    vals = cmap.G(np.tile(t, 2 * n), np.concatenate(shifted))
    fd = np.stack([(vals[(2 * j) * N:(2 * j + 1) * N] - vals[(2 * j + 1) * N:(2 * j + 2) * N])
                   / (2 * h) for j in range(n)], axis=-1)
    scale = np.maximum(np.linalg.norm(J, axis=(-2, -1)), 1e-300)
    rel_fd = np.linalg.norm(J - fd, axis=(-2, -1)) / scale
    J_int = cmap.jacobian_G_integral_form(t, pts)
    rel_int = np.linalg.norm(J - J_int, axis=(-2, -1)) / scale
    passed = bool(np.max(rel_fd) < rel_tol and np.all(det > 0))
    rows = [{"t": float(t[k]), **{f"point_{i + 1}": float(pts[k, i]) for i in range(n)},
             "det_J": float(det[k]), "rel_err_fd": float(rel_fd[k]),
             "rel_err_integral_form": float(rel_int[k])} for k in range(N)]
    return VerificationReport(
        op="check_jacobian",
        scenario=scenario.name,
        passed=passed,
        margins={"max_rel_err_fd": float(np.max(rel_fd)),
                 "max_rel_err_integral_form": float(np.max(rel_int)),
                 "min_det_J": float(np.min(det))},
        params={"fd_step": h, "rel_tol": rel_tol, "integrator_tol": tol},
        samples=N,
        seed=seed,
        table=rows,
    )


def equilibrium_diagnostics(scenario: Scenario, times=None, tol=DEFAULT_TOL,
                            cmap: ConjugacyMap | None = None):
    """|G(t, ybar)| against |X(t,0) ybar| and |H(t,0) - ybar| against the Gronwall envelope."""
    if scenario.equilibrium is None:
        return VerificationReport(
            op="equilibrium_diagnostics", scenario=scenario.name, passed=True,
            notes=["no equilibrium declared; diagnostics skipped"],
        )
    cmap = cmap or ConjugacyMap(scenario, tol)
    ybar = np.asarray(scenario.equilibrium, dtype=float)
    n = scenario.n
    times = scenario.time_grid() if times is None else np.asarray(times, dtype=float)
    m = len(times)
    G_bar = cmap.G(times, np.broadcast_to(ybar, (m, n)))
    lin = linear_flow(scenario.A, np.zeros(m), times, np.broadcast_to(ybar, (m, n)), tol)
    H_0 = cmap.H(times, np.zeros((m, n)))
    env, nl = scenario.envelope, scenario.nonlinearity
    acc = cumulative_integral(lambda s: float(env.D(s) * nl.gamma(s)), np.concatenate([[0.0], times]))[1:]
    envelope = float(env.D(0.0)) * np.exp(-env.alpha * env.log_mu(times) + acc) * np.linalg.norm(ybar)
    g_dev = np.linalg.norm(G_bar - lin, axis=-1)
    h_dist = np.linalg.norm(H_0 - ybar, axis=-1)
    g_norm = np.linalg.norm(G_bar, axis=-1)
    start = int(np.floor(m * 0.8))
    g_tail_ok = bool(np.all(np.diff(g_norm[start:]) <= 1e-12))
    h_tail_ok = bool(np.all(np.diff(h_dist[start:]) <= 1e-12))
    dom = check_domination(scenario)
    under = bool(np.all(h_dist <= envelope + EQUILIBRIUM_SLACK))
    passed = bool(np.max(g_dev) < EQUILIBRIUM_SLACK and under and g_tail_ok and h_tail_ok)
    notes = [FINITE_HORIZON_NOTE]
    if not dom.passed:
        notes.append("domination check failed: the Gronwall envelope need not tend to 0")
    rows = [{"t": float(times[k]), "G_norm": float(g_norm[k]),
             "G_minus_linear": float(g_dev[k]), "H0_minus_ybar": float(h_dist[k]),
             "gronwall_envelope": float(envelope[k])} for k in range(m)]
    return VerificationReport(
        op="equilibrium_diagnostics",
        scenario=scenario.name,
        passed=passed,
        margins={"max_G_minus_linear": float(np.max(g_dev)),
                 "min_envelope_slack": float(np.min(envelope + EQUILIBRIUM_SLACK - h_dist)),
                 "G_tail_decreasing": g_tail_ok, "H_tail_decreasing": h_tail_ok,
                 "domination_passed": dom.passed},
        params={"equilibrium": ybar.tolist(), "slack": EQUILIBRIUM_SLACK,
                "tail_fraction": 0.2, "integrator_tol": tol},
        samples=m,
        notes=notes,
        table=rows,
    )


def properness_probe(scenario: Scenario, t: float, radii=(1.0, 10.0, 100.0), directions=16,
                     tol=DEFAULT_TOL, cmap: ConjugacyMap | None = None, p: float | None = None):
    """min |G(t, eta)| over spheres of growing radius; properness needs growth.

    Since |G - id| <= p the minimum must exceed radius - p.
    """
    cmap = cmap or ConjugacyMap(scenario, tol)
    n = scenario.n
    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        ang = np.linspace(0, 2 * np.pi, directions, endpoint=False)
        dirs = np.zeros((directions, n))
        dirs[:, 0], dirs[:, 1] = np.cos(ang), np.sin(ang)
    if p is None:
        p = compute_pq(scenario, max(t, 1e-9)).margins["p"]
    mins = []
    for r in radii:
        vals = cmap.G(np.full(len(dirs), float(t)), r * dirs)
        mins.append(float(np.min(np.linalg.norm(vals, axis=-1))))
    ok = all(m >= r - p - BOUND_SLACK for m, r in zip(mins, radii))
    return VerificationReport(
        op="properness_probe",
        scenario=scenario.name,
        passed=bool(ok and all(b > a for a, b in zip(mins, mins[1:]))),
        margins={"min_norm_by_radius": dict(zip([str(r) for r in radii], mins)), "p": p},
        params={"t": float(t), "directions": len(dirs)},
        samples=len(dirs) * len(radii),
        notes=["heuristic: growth of |G(t, .)| on spheres, not a proof of properness"],
    )
