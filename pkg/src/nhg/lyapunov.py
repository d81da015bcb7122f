"""Lyapunov matrix paths S(t) and the linear density rho = (x* S x)^-a.

The path solves the equality version of the differential inequality

    S' + A* S + S A <= -(I + K S) mu'/mu

backward from S(T_max) = sigma I. A positive definite solution certifies the
contraction envelope (with |S| <= C D^2); it also gives the density
rho(t, x) = V(t, x)^-a, V = x* S(t) x, whose divergence expression is

    d rho/dt + grad rho . A x + rho tr A = V^-(a+1) x* {a (I + K S) mu'/mu + tr A S} x

for any a. :func:`choose_a` picks the exponent that makes the right-hand
side positive and rho integrable away from the origin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .ode import integrate_ivp, matmul, matvec, opnorm, trace
from .report import VerificationReport
from .scenario import Scenario

S_TOL = 1e-12
SLACK_TOL = 1e-8
C_MARGIN = 1.01
EPS_L = 1e-6
A_MAX = 2.0**20
EXCLUSION_RADIUS = 0.1
POSITIVITY_REL = 1e-9


class CertificateError(ArithmeticError):
    """The backward Lyapunov solve lost positive definiteness."""


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _lambda_min(M):
    return np.linalg.eigvalsh(_sym(M))[..., 0]


def five_point_derivative(values, h):
    """d/dt of nodal samples on a uniform grid: central five-point stencil,
    one-sided five-point formulas at the two nodes nearest each end."""
    v = np.asarray(values, dtype=float)
    m = len(v)
    if m < 5:
        raise ValueError("five-point stencil needs at least 5 nodes")
    d = np.empty_like(v)
    d[2:-2] = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * h)
    d[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * h)
    d[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * h)
    d[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * h)
    d[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4] - v[-5]) / (12 * h)
    return d


@dataclass
class LyapunovCertificate:
    times: np.ndarray
    S: np.ndarray  # (m, n, n)
    K: float
    C: float
    sigma: float
    a: float | None = None
    margins: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.S.shape[-1]

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    def S_dot(self) -> np.ndarray:
        """Nodal time derivative of S by the five-point stencil."""
        return five_point_derivative(self.S, self.step)

    def _interp(self, nodal, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.times[0], self.times[-1]
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise ValueError(f"t outside certificate range [{lo}, {hi}]")
        tc = np.clip(t, lo, hi)
        k = np.clip(np.searchsorted(self.times, tc, side="right") - 1, 0, len(self.times) - 2)
        w = (tc - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (1 - w)[..., None, None] * nodal[k] + w[..., None, None] * nodal[k + 1]

    def S_at(self, t):
        """S(t) by linear interpolation between nodes."""
        return self._interp(self.S, t)

    def S_dot_at(self, t):
        return self._interp(self.S_dot(), t)

    def with_a(self, a: float) -> "LyapunovCertificate":
        return LyapunovCertificate(self.times, self.S, self.K, self.C, self.sigma, float(a),
                                   dict(self.margins))

    def to_json(self) -> str:
        return json.dumps(
            {
                "times": self.times.tolist(),
                "S": [blk.ravel().tolist() for blk in self.S],
                "n": self.n,
                "K": self.K,
                "C": self.C,
                "sigma": self.sigma,
                "a": self.a,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "LyapunovCertificate":
        d = json.loads(text)
        n = d["n"]
        S = np.array([np.reshape(row, (n, n)) for row in d["S"]], dtype=float)
        return cls(np.array(d["times"], dtype=float), S, d["K"], d["C"], d["sigma"], d["a"])


def lyapunov_rhs(scenario: Scenario, K: float):
    """S' = -A* S - S A - (I + K S) mu'/mu."""
    n = scenario.n
    env = scenario.envelope

    def rhs(t, S):
        A = scenario.A(t)
        grow = float(env.growth(t))
        return -A.T @ S - S @ A - (np.eye(n) + K * S) * grow

    return rhs


def build_S(scenario: Scenario, K: float | None = None, sigma: float | None = None,
            nodes: int | None = None, tol: float = S_TOL) -> LyapunovCertificate:
    """Backward solve of the equality Lyapunov ODE on a uniform node grid."""
    cfg = scenario.grid("certificate")
    K = float(cfg["K"] if K is None else K)
    sigma = float(cfg["sigma"] if sigma is None else sigma)
    nodes = int(cfg["nodes"] if nodes is None else nodes)
    if K <= 0 or sigma <= 0:
        raise ValueError("K and sigma must be positive")
    n = scenario.n
    times = np.linspace(0.0, scenario.T_max, nodes)
    traj = integrate_ivp(lyapunov_rhs(scenario, K), scenario.T_max, sigma * np.eye(n), 0.0,
                         tol, t_eval=times)
    idx = np.searchsorted(traj.t, times)
    S = traj.y[idx]
    asym = float(np.max(np.abs(S - np.swapaxes(S, -1, -2))))
    S = _sym(S)
    lam = _lambda_min(S)
    if np.any(lam <= 0):
        t_bad = float(times[np.flatnonzero(lam <= 0)[-1]])
        raise CertificateError(
            f"S(t) loses positive definiteness at t = {t_bad:.6g}; "
            "try a larger terminal scale sigma or a smaller K"
        )
    D2 = np.asarray(scenario.envelope.D(times), dtype=float) ** 2
    ratio = np.atleast_1d(opnorm(S)) / D2
    C = float(np.max(ratio)) * C_MARGIN
    return LyapunovCertificate(
        times, S, K, C, sigma,
        margins={"min_eigenvalue": float(np.min(lam)), "asymmetry_before_sym": asym,
                 "max_norm_over_D2": float(np.max(ratio))},
    )


def certificate_slack(scenario: Scenario, cert: LyapunovCertificate, relative: bool = False):
    """Smallest eigenvalue of -[S' + A*S + SA] - (I + K S) mu'/mu at each node.

    With ``relative`` the eigenvalue is divided by the sum of the norms of the
    three terms, which makes the test independent of the size of S.
    """
    t = cert.times
    A = scenario.A(t)
    S = cert.S
    At = np.swapaxes(A, -1, -2)
    grow = np.asarray(scenario.envelope.growth(t), dtype=float)
    Sd = cert.S_dot()
    sandwich = matmul(At, S) + matmul(S, A)
    forcing = (np.eye(cert.n) + cert.K * S) * grow[:, None, None]
    lam = _lambda_min(-(Sd + sandwich) - forcing)
    if not relative:
        return lam
    scale = (np.atleast_1d(opnorm(Sd)) + np.atleast_1d(opnorm(sandwich))
             + np.atleast_1d(opnorm(forcing)))
    return lam / np.maximum(scale, 1e-300)


def verify_certificate(scenario: Scenario, cert: LyapunovCertificate,
                       slack_tol: float = SLACK_TOL) -> VerificationReport:
    """Symmetry, positivity, |S| <= C D^2 and the differential inequality at every node."""
    t = cert.times
    S = cert.S
    norms = np.atleast_1d(opnorm(S))
    asym = float(np.max(np.abs(S - np.swapaxes(S, -1, -2)) / np.maximum(norms, 1e-300)[:, None, None]))
    lam = _lambda_min(S)
    D2 = np.asarray(scenario.envelope.D(t), dtype=float) ** 2
    bound_gap = cert.C * D2 - norms
    slack = certificate_slack(scenario, cert)
    rel_slack = certificate_slack(scenario, cert, relative=True)
    bad_bound = np.flatnonzero(bound_gap < 0)
    bad_slack = np.flatnonzero(rel_slack < -slack_tol)
    checks = {
        "symmetric": asym <= 1e-12,
        "positive_definite": bool(np.all(lam > 0)),
        "norm_bound": len(bad_bound) == 0,
        "inequality": len(bad_slack) == 0,
    }
    notes = []
    if len(bad_bound):
        notes.append(f"|S| > C D^2 at t = {float(t[bad_bound[0]]):.6g}")
    if len(bad_slack):
        notes.append(f"differential inequality violated at t = {float(t[bad_slack[0]]):.6g}")
    return VerificationReport(
        op="verify_certificate",
        scenario=scenario.name,
        passed=all(checks.values()),
        margins={
            **checks,
            "max_relative_asymmetry": asym,
            "min_eigenvalue": float(np.min(lam)),
            "min_norm_bound_gap": float(np.min(bound_gap)),
            "min_slack": float(np.min(slack)),
            "min_relative_slack": float(np.min(rel_slack)),
            "max_abs_slack": float(np.max(np.abs(slack))),
            "worst_slack_t": float(t[int(np.argmin(rel_slack))]),
        },
        params={"K": cert.K, "C": cert.C, "sigma": cert.sigma, "slack_tol": slack_tol,
                "slack_measure": "smallest eigenvalue over the sum of term norms",
                "derivative": "five-point stencil", "nodes": len(t)},
        samples=len(t),
        notes=notes,
    )


def _L_matrix(scenario: Scenario, cert: LyapunovCertificate, a: float):
    """a (I + K S) mu'/mu + tr A S at every node."""
    t = cert.times
    grow = np.asarray(scenario.envelope.growth(t), dtype=float)[:, None, None]
    trA = trace(scenario.A(t))[:, None, None]
    return a * (np.eye(cert.n) + cert.K * cert.S) * grow + trA * cert.S


def L_margin(scenario: Scenario, cert: LyapunovCertificate, a: float) -> float:
    return float(np.min(_lambda_min(_L_matrix(scenario, cert, a))))


def integrability_floor(n: int) -> float:
    """Smallest power of two a with a >= n/2 + 1/2 (so 2a > n)."""
    a = 1.0
    while a < n / 2 + 0.5:
        a *= 2
    return a


def _ceil_sig(x: float, digits: int = 2) -> float:
    if x <= 0:
        return x
    e = int(np.floor(np.log10(x))) - digits + 1
    return float(np.ceil(x / 10.0**e) * 10.0**e)


def choose_a(scenario: Scenario, cert: LyapunovCertificate, eps: float = EPS_L,
             a_max: float = A_MAX) -> tuple[float, dict]:
    """Density exponent: the larger of the integrability floor and the
    smallest a (doubling, then bisection to 2 significant digits) that makes
    the L matrix >= eps I at every node."""
    floor = integrability_floor(cert.n)
    a = 1.0
    while L_margin(scenario, cert, a) < eps:
        a *= 2
        if a > a_max:
            raise ValueError(
                f"no a <= {a_max:g} makes L positive; mu'/mu may vanish faster than tr A"
            )
    lo, hi = a / 2, a
    if a > 1.0 or L_margin(scenario, cert, a / 2) >= eps:
        lo = 0.0 if a == 1.0 else a / 2
        while (hi - lo) > 0.005 * hi:
            mid = 0.5 * (lo + hi)
            if L_margin(scenario, cert, mid) >= eps:
                hi = mid
            else:
                lo = mid
    a_L = _ceil_sig(hi)
    if L_margin(scenario, cert, a_L) < eps:
        a_L = hi
    chosen = max(floor, a_L)
    info = {"integrability_floor": floor, "positivity_a": a_L, "a": chosen,
            "eps": eps, "achieved_margin": L_margin(scenario, cert, chosen)}
    return chosen, info


def eval_rho_linear(cert: LyapunovCertificate, t, x, scenario: Scenario | None = None,
                    check_bound: bool = True):
    """rho(t, x) = (x* S(t) x)^-a; batched over x rows.

    With ``scenario`` given, also checks (C D(t)^2)^-a |x|^-2a <= rho.
    """
    if cert.a is None:
        raise ValueError("certificate has no density exponent; run choose_a first")
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise ValueError("rho is defined on R^n without the origin")
    S = cert.S_at(t)
    V = np.sum(x * matvec(S, x), axis=-1)
    rho = V ** (-cert.a)
    if scenario is not None and check_bound:
        D2 = np.asarray(scenario.envelope.D(t), dtype=float) ** 2
        lower = (cert.C * D2) ** (-cert.a) * r ** (-2 * cert.a)
        if np.any(lower > rho * (1 + 1e-12)):
            raise AssertionError("lower bound (C D^2)^-a |x|^-2a <= rho violated")
    return rho


def linear_density_expression(scenario: Scenario, cert: LyapunovCertificate, t, x):
    """d rho/dt + grad rho . A x + rho tr A, with exact spatial derivatives
    and the stencil derivative of S. Returns (value, scale) where scale is the
    sum of magnitudes of the terms (for relative sign tests)."""
    a = cert.a
    x = np.asarray(x, dtype=float)
    S = cert.S_at(t)
    Sd = cert.S_dot_at(t)
    A = scenario.A(t)
    V = np.sum(x * matvec(S, x), axis=-1)
    xSdx = np.sum(x * matvec(Sd, x), axis=-1)
    xSAx = np.sum(matvec(S, x) * matvec(A, x), axis=-1)
    trA = trace(A)
    pref = V ** (-a - 1)
    value = pref * (-a * (xSdx + 2 * xSAx) + V * trA)
    scale = pref * (a * np.abs(xSdx) + 2 * a * np.abs(xSAx) + np.abs(V * trA))
    return value, scale


def sample_density_points(scenario: Scenario, count: int, seed: int, radius=None, t_max=None,
                          stream: int = 21):
    """(t, x) with t uniform in [0, t_max] and |x| uniform in [r0, r1], uniform direction."""
    cfg = scenario.grid("density")
    r0, r1 = cfg["radius"] if radius is None else radius
    t_max = scenario.T_max if (t_max is None and cfg.get("t_max") is None) else (
        t_max if t_max is not None else cfg["t_max"])
    rng = np.random.default_rng(np.random.SeedSequence([seed, stream]))
    t = rng.uniform(0.0, t_max, count)
    d = rng.normal(size=(count, scenario.n))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    r = rng.uniform(r0, r1, count)
    return t, d * r[:, None]


def verify_linear_density(scenario: Scenario, cert: LyapunovCertificate, samples=None,
                          seed: int = 0, exclusion: float = EXCLUSION_RADIUS) -> VerificationReport:
    """Strict positivity of the divergence expression at samples outside the exclusion ball."""
    if samples is None:
        samples = sample_density_points(scenario, scenario.grid("density")["samples"], seed)
    t, x = (np.asarray(v, dtype=float) for v in samples)
    x = x.reshape(len(t), scenario.n)
    keep = np.linalg.norm(x, axis=-1) >= exclusion
    skipped = int(np.sum(~keep))
    t, x = t[keep], x[keep]
    value, scale = linear_density_expression(scenario, cert, t, x)
    positive = value > POSITIVITY_REL * scale
    rel = value / np.maximum(scale, 1e-300)
    notes = []
    if skipped:
        notes.append(f"{skipped} samples inside |x| < {exclusion} skipped")
    return VerificationReport(
        op="verify_linear_density",
        scenario=scenario.name,
        passed=bool(np.all(positive)) and len(t) > 0,
        margins={"min_value": float(np.min(value)), "min_relative_margin": float(np.min(rel)),
                 "fraction_positive": float(np.mean(positive)), "a": cert.a},
        params={"exclusion_radius": exclusion, "positivity_rel": POSITIVITY_REL,
                "S_derivative": "five-point stencil, linear interpolation between nodes"},
        samples=len(t),
        seed=seed,
        notes=notes,
        table=[{"t": float(t[k]), **{f"x_{i + 1}": float(x[k, i]) for i in range(scenario.n)},
                "value": float(value[k])} for k in range(len(t))],
    )


def shell_integrals(density, n: int, r: float, levels: int, radial_nodes: int = 24,
                    angular_nodes: int = 32):
    """Integrals of ``density(points)`` over the shells r 2^(k-1) < |x| < r 2^k.

    Radial Gauss-Legendre in log |x| (densities decaying like a power of |x|
    are smooth there) times the trapezoid rule on the circle for n = 2. All
    shells go to ``density`` in one batch.
    """
    if n not in (1, 2):
        raise NotImplementedError("shell quadrature is implemented for n = 1 and n = 2")
    xg, wg = np.polynomial.legendre.leggauss(radial_nodes)
    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
        dw = np.array([1.0, 1.0])
    else:
        ang = 2 * np.pi * np.arange(angular_nodes) / angular_nodes
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        dw = np.full(angular_nodes, 2 * np.pi / angular_nodes)
    half = 0.5 * np.log(2.0)
    mids = np.log(r) + (np.arange(1, levels + 1) - 0.5) * np.log(2.0)
    s = mids[:, None] + half * xg[None, :]  # (levels, radial)
    rad = np.exp(s)
    pts = (rad[..., None, None] * dirs).reshape(-1, n)
    vals = np.asarray(density(pts), dtype=float).reshape(levels, radial_nodes, len(dirs))
    weights = half * wg[None, :, None] * rad[..., None] ** n * dw[None, None, :]
    return np.sum(weights * vals, axis=(1, 2))


def integrability_summary(increments, divergence_ratio: float = 0.99):
    """Cauchy test on shell increments; geometric extrapolation of the limit."""
    inc = np.asarray(increments, dtype=float)
    partial = np.cumsum(inc)
    ratios = inc[1:] / np.where(inc[:-1] != 0, inc[:-1], np.nan)
    last = float(ratios[-1]) if len(ratios) else float("nan")
    converges = bool(len(ratios) >= 2 and np.all(ratios[-2:] < divergence_ratio)
                     and np.all(ratios[-2:] >= 0))
    limit = float(partial[-1] + inc[-1] * last / (1 - last)) if converges else float("inf")
    return {"partial_sums": partial.tolist(), "ratios": ratios.tolist(),
            "last_ratio": last, "converges": converges, "limit": limit}


def linear_integrability(scenario: Scenario, cert: LyapunovCertificate, t: float, r: float = 1.0,
                         levels: int = 8) -> VerificationReport:
    """Integrals of rho(t, .) over growing shells outside the ball of radius r."""
    inc = shell_integrals(lambda x: eval_rho_linear(cert, np.full(len(x), t), x), scenario.n,
                          r, levels)
    summary = integrability_summary(inc)
    return VerificationReport(
        op="linear_integrability",
        scenario=scenario.name,
        passed=summary["converges"],
        margins={"limit": summary["limit"], "last_ratio": summary["last_ratio"],
                 "expected_ratio": 2.0 ** (scenario.n - 2 * cert.a)},
        params={"t": t, "r": r, "levels": levels, "a": cert.a},
        samples=levels,
        table=[{"R": r * 2**k, "partial_integral": p}
               for k, p in zip(range(1, levels + 1), summary["partial_sums"])],
    )
