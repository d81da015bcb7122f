"""The density pushed back through the conjugacy, and attraction sampling.

rho_bar(t, eta) = rho(t, G(t, eta)) det dG/deta, with rho the linear density
of a Lyapunov certificate. The checks here are numerical: the divergence
inequality by finite differences, the change of variables by Monte Carlo,
integrability by shell quadrature, and attraction by forward simulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc
from scipy.stats import norm as normal

from .conjugacy import ConjugacyMap
from .lyapunov import (
    LyapunovCertificate,
    eval_rho_linear,
    integrability_summary,
    shell_integrals,
)
from .ode import DEFAULT_TOL, solve_batch
from .report import VerificationReport
from .scenario import Scenario, f_vanishes_at_origin

EPS0 = 0.1
H_T = 1e-4
H_X = 1e-4
HALVING_TOL = 0.10
MC_BATCHES = 20
MC_CHUNK = 100_000
SLOPE_TOL = 0.15
BASIN_ATOL_FACTOR = 1e-3
SAMPLE_NOTE = "positivity is certified at the sampled points only"


@dataclass
class TransportedDensity:
    scenario: Scenario
    cert: LyapunovCertificate
    cmap: ConjugacyMap
    eps0: float = EPS0

    def __post_init__(self):
        if self.cert.a is None:
            raise ValueError("certificate has no density exponent; run choose_a first")
        if self.eps0 <= 0:
            raise ValueError("exclusion radius must be positive")

    @property
    def t_limit(self) -> float:
        return min(self.scenario.T_max, float(self.cert.times[-1]))

    def pieces(self, t, eta):
        """(G, det J) at a batch of points; exact identity when f vanishes."""
        eta = np.asarray(eta, dtype=float)
        if self.scenario.is_linear:
            return eta.copy(), np.ones(eta.shape[:-1])
        G, _, det = self.cmap.G_and_jacobian(t, eta)
        return G, det


def eval_rho_bar(td: TransportedDensity, t, eta):
    """rho(t, G(t, eta)) det dG/deta; ``eta`` (n,) or (N, n)."""
    n = td.scenario.n
    eta = np.asarray(eta, dtype=float)
    single = eta.ndim == 1
    pts = eta.reshape(-1, n)
    if np.any(np.linalg.norm(pts, axis=-1) == 0):
        raise ValueError("rho_bar is defined away from the origin")
    tt = np.broadcast_to(np.asarray(t, dtype=float), (len(pts),))
    G, det = td.pieces(tt, pts)
    if np.any(np.linalg.norm(G, axis=-1) == 0):
        raise ValueError("G(t, eta) = 0 at a nonzero eta; f(t, 0) = 0 may not hold")
    out = eval_rho_linear(td.cert, tt, G) * det
    return out[0] if single else out


def sample_transport_points(scenario: Scenario, count: int, seed: int, t_max=None, radius=None):
    """Half Halton points, half uniform random: t in [0, t_max], |eta| in
    [r0, r1], direction uniform on the sphere."""
    cfg = scenario.grid("transport")
    t_max = min(float(cfg["t_max"] if t_max is None else t_max), scenario.T_max)
    r0, r1 = cfg["radius"] if radius is None else radius
    n = scenario.n
    half = count // 2
    halton = qmc.Halton(d=n + 2, scramble=False)
    halton.fast_forward(1)  # skip the all-zero point
    u_det = halton.random(half)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 31]))
    u = np.concatenate([u_det, rng.uniform(size=(count - half, n + 2))])
    u = np.clip(u, 1e-12, 1 - 1e-12)
    t = u[:, 0] * t_max
    r = r0 + u[:, 1] * (r1 - r0)
    d = normal.ppf(u[:, 2:])
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return t, d * r[:, None]


def _divergence_values(td: TransportedDensity, t, eta, h_t, h_x):
    """d rho_bar/dt + grad rho_bar . g + rho_bar div g by finite differences.

    All shifted points go through one batched evaluation. Central differences
    in t except within h_t of the ends of the time range, where the
    three-point one-sided formula is used.
    """
    sc = td.scenario
    n = sc.n
    N = len(t)
    lo = t - h_t < 0
    hi = t + h_t > td.t_limit
    # time stencil offsets per sample: (o1, o2) with weights depending on side
    o1 = np.where(lo, h_t, np.where(hi, -h_t, h_t))
    o2 = np.where(lo, 2 * h_t, np.where(hi, -2 * h_t, -h_t))
    ts = [t, t + o1, t + o2]
    pts = [eta, eta, eta]
    for j in range(n):
        e = np.zeros(n)
        e[j] = h_x
        ts += [t, t]
        pts += [eta + e, eta - e]
    vals = eval_rho_bar(td, np.concatenate(ts), np.concatenate(pts)).reshape(-1, N)
    r0, r1, r2 = vals[0], vals[1], vals[2]
    central = (r1 - r2) / (2 * h_t)
    fwd = (-3 * r0 + 4 * r1 - r2) / (2 * h_t)
    bwd = (3 * r0 - 4 * r1 + r2) / (2 * h_t)
    dt = np.where(lo, fwd, np.where(hi, bwd, central))
    grad = np.stack([(vals[3 + 2 * j] - vals[4 + 2 * j]) / (2 * h_x) for j in range(n)], axis=-1)
    g = sc.g(t, eta)
    div = sc.div_g(t, eta)
    adv = np.sum(grad * g, axis=-1)
    value = dt + adv + r0 * div
    scale = np.abs(dt) + np.abs(adv) + np.abs(r0 * div)
    return value, scale, r0


def verify_density_inequality(td: TransportedDensity, samples=None, steps=(H_T, H_X),
                              seed: int = 0, halving_tol: float = HALVING_TOL):
    """Positivity of d rho_bar/dt + div(rho_bar g) at samples, with a
    halved-step rerun to confirm the finite differences have settled."""
    sc = td.scenario
    if sc.r < 2:
        raise ValueError(f"scenario {sc.name!r} declares r = {sc.r}; the density needs r >= 2")
    h_t, h_x = (float(v) for v in steps)
    if samples is None:
        samples = sample_transport_points(sc, sc.grid("transport")["samples"], seed)
    t, eta = (np.asarray(v, dtype=float) for v in samples)
    eta = eta.reshape(len(t), sc.n)
    keep = np.linalg.norm(eta, axis=-1) >= td.eps0 + 2 * h_x
    skipped = int(np.sum(~keep))
    t, eta = t[keep], eta[keep]
    if len(t) == 0:
        raise ValueError("no samples outside the exclusion ball")
    value, scale, rho = _divergence_values(td, t, eta, h_t, h_x)
    half, _, _ = _divergence_values(td, t, eta, h_t / 2, h_x / 2)
    change = np.abs(value - half) / np.maximum(np.abs(value), 1e-300)
    positive = value > 0
    stable = change < halving_tol
    notes = [SAMPLE_NOTE]
    if skipped:
        notes.append(f"{skipped} samples with |eta| < eps0 + 2 h_x skipped")
    rows = [{"t": float(t[k]), **{f"eta_{i + 1}": float(eta[k, i]) for i in range(sc.n)},
             "rho_bar": float(rho[k]), "value": float(value[k]),
             "value_half_step": float(half[k]), "relative_change": float(change[k])}
            for k in range(len(t))]
    return VerificationReport(
        op="verify_density_inequality",
        scenario=sc.name,
        passed=bool(np.all(positive) and np.all(stable)),
        margins={"min_value": float(np.min(value)),
                 "min_relative_margin": float(np.min(value / np.maximum(scale, 1e-300))),
                 "fraction_positive": float(np.mean(positive)),
                 "max_halving_change": float(np.max(change)),
                 "a": td.cert.a},
        params={"h_t": h_t, "h_x": h_x, "halving_tol": halving_tol, "eps0": td.eps0,
                "integrator_tol": td.cmap.tol,
                "samples": "half Halton, half uniform random"},
        samples=len(t),
        seed=seed,
        notes=notes,
        table=rows,
    )


def default_mc_box(scenario: Scenario) -> np.ndarray:
    box = scenario.grid("transport")["mc_box"]
    if box is None:
        box = [[1.0, 3.0]] + [[-1.0, 1.0]] * (scenario.n - 1)
    return np.asarray(box, dtype=float)


def _uniform_in(box, count, rng):
    return rng.uniform(box[:, 0], box[:, 1], (count, len(box)))


def _in_box(points, box):
    return np.all((points >= box[:, 0]) & (points <= box[:, 1]), axis=-1)


def _bounding_box(box, p):
    """Z widened by p on every side; holds G(t, Z) since |G - id| <= p."""
    return np.stack([box[:, 0] - p, box[:, 1] + p], axis=-1)


def change_of_variables_check(td: TransportedDensity, t: float, box=None, N: int = 100_000,
                              seed: int = 0, p: float | None = None,
                              batches: int = MC_BATCHES):
    """int_Z rho_bar against int_{G(t,Z)} rho by two Monte Carlo routes.

    lhs averages rho_bar over uniform points of Z. The mapped estimate sends
    the same points through G and weights rho by det J. The rejection
    estimate samples a box around G(t, Z), keeps points y with H(t, y) in Z,
    and averages rho there; it shares no evaluations with lhs. Standard
    errors come from ``batches`` equal batch means.
    """
    from .contraction import compute_pq

    sc = td.scenario
    box = default_mc_box(sc) if box is None else np.asarray(box, dtype=float)
    if N < 10_000:
        raise ValueError("N must be at least 1e4")
    nearest = np.clip(0.0, box[:, 0], box[:, 1])
    if np.linalg.norm(nearest) < td.eps0:
        raise ValueError("region must stay outside the exclusion ball")
    if p is None:
        p = 0.0 if sc.is_linear else compute_pq(sc, max(t, 1e-9)).margins["p"]
    est = _mc_pair(td, t, box, N, seed, p, batches)
    lhs, mapped, rej = est["lhs"], est["mapped"], est["rejection"]
    diff = est["lhs_batches"] - est["rejection_batches"]
    se = float(np.std(diff, ddof=1) / np.sqrt(len(diff)))
    rel = abs(lhs - rej) / abs(rej)
    return VerificationReport(
        op="change_of_variables_check",
        scenario=sc.name,
        passed=bool(abs(lhs - rej) <= 3 * se),
        margins={"lhs": lhs, "rhs_mapped": mapped, "rhs_rejection": rej,
                 "relative_error": rel, "mapped_relative_error": abs(lhs - mapped) / abs(lhs),
                 "standard_error": se, "errors_in_standard_units": abs(lhs - rej) / se
                 if se > 0 else 0.0, "acceptance_rate": est["acceptance_rate"]},
        params={"t": t, "box": box.tolist(), "N": N, "batches": batches, "p": p,
                "integrator_tol": td.cmap.tol},
        samples=N,
        seed=seed,
    )


def _mc_pair(td: TransportedDensity, t, box, N, seed, p, batches: int = MC_BATCHES,
             chunk: int = MC_CHUNK):
    """Chunked lhs / mapped / rejection estimates with per-batch means."""
    sc = td.scenario
    n = sc.n
    big = _bounding_box(box, p)
    vol_z = float(np.prod(box[:, 1] - box[:, 0]))
    vol_b = float(np.prod(big[:, 1] - big[:, 0]))
    rng_z = np.random.default_rng(np.random.SeedSequence([seed, 41]))
    rng_b = np.random.default_rng(np.random.SeedSequence([seed, 43]))
    lhs_vals = np.empty(N)
    map_vals = np.empty(N)
    rej_vals = np.empty(N)
    accepted = 0
    for start in range(0, N, chunk):
        m = min(chunk, N - start)
        eta = _uniform_in(box, m, rng_z)
        tt = np.full(m, float(t))
        G, det = td.pieces(tt, eta)
        rho_G = eval_rho_linear(td.cert, tt, G)
        lhs_vals[start:start + m] = rho_G * det
        # same points, rho weighted by det J: the importance form of int_{G(Z)} rho
        map_vals[start:start + m] = det * rho_G
        y = _uniform_in(big, m, rng_b)
        back = y if sc.is_linear else td.cmap.H(tt, y)
        inside = _in_box(back, box)
        accepted += int(np.sum(inside))
        rho_y = np.zeros(m)
        if np.any(inside):
            rho_y[inside] = eval_rho_linear(td.cert, tt[inside], y[inside])
        rej_vals[start:start + m] = rho_y
    lhs_vals *= vol_z
    map_vals *= vol_z
    rej_vals *= vol_b
    return {
        "lhs": float(np.mean(lhs_vals)),
        "mapped": float(np.mean(map_vals)),
        "rejection": float(np.mean(rej_vals)),
        "lhs_values": lhs_vals,
        "rejection_values": rej_vals,
        "lhs_batches": np.array([b.mean() for b in np.array_split(lhs_vals, batches)]),
        "rejection_batches": np.array([b.mean() for b in np.array_split(rej_vals, batches)]),
        "acceptance_rate": accepted / N,
    }


def mc_scaling_check(td: TransportedDensity, t: float, box=None, sizes=(10_000, 100_000, 1_000_000),
                     seed: int = 0, p: float | None = None, batches: int = MC_BATCHES,
                     slope_tol: float = SLOPE_TOL):
    """Log-log slope of the Monte Carlo error of lhs - rhs against N.

    One run of the largest size is drawn; smaller sizes are its prefixes.
    The error at each size is the batch-means standard error of the paired
    difference, and the relative error lhs/rhs - 1 is reported next to it.
    """
    from .contraction import compute_pq

    sc = td.scenario
    box = default_mc_box(sc) if box is None else np.asarray(box, dtype=float)
    sizes = sorted(int(s) for s in sizes)
    if p is None:
        p = 0.0 if sc.is_linear else compute_pq(sc, max(t, 1e-9)).margins["p"]
    est = _mc_pair(td, t, box, sizes[-1], seed, p)
    rows = []
    for size in sizes:
        lv = est["lhs_values"][:size]
        rv = est["rejection_values"][:size]
        d = np.array([a.mean() - b.mean() for a, b in
                      zip(np.array_split(lv, batches), np.array_split(rv, batches))])
        rhs = float(rv.mean())
        se = float(np.std(d, ddof=1) / np.sqrt(batches)) / abs(rhs)
        rows.append({"N": size, "lhs": float(lv.mean()), "rhs": rhs,
                     "relative_error": abs(float(lv.mean()) - rhs) / abs(rhs),
                     "relative_standard_error": se})
    x = np.log10([r["N"] for r in rows])
    y = np.log10([r["relative_standard_error"] for r in rows])
    slope = float(np.polyfit(x, y, 1)[0])
    return VerificationReport(
        op="mc_scaling_check",
        scenario=sc.name,
        passed=abs(slope + 0.5) <= slope_tol,
        margins={"slope": slope, "expected_slope": -0.5,
                 **{f"relative_error_N{r['N']}": r["relative_error"] for r in rows}},
        params={"t": t, "box": box.tolist(), "sizes": sizes, "batches": batches,
                "slope_tol": slope_tol, "error_measure": "batch-means standard error"},
        samples=sizes[-1],
        seed=seed,
        table=rows,
    )


def integrability_estimate(td: TransportedDensity, t: float, r: float = 1.0, levels: int = 8):
    """Integrals of rho_bar(t, .) over the shells r 2^(k-1) < |eta| < r 2^k."""
    if r < td.eps0:
        raise ValueError("r must be at least the exclusion radius")
    sc = td.scenario
    inc = shell_integrals(lambda x: eval_rho_bar(td, t, x), sc.n, r, levels)
    summary = integrability_summary(inc)
    notes = []
    if not summary["converges"]:
        notes.append("shell integrals do not decay geometrically; the exponent a may be too small")
    return VerificationReport(
        op="integrability_estimate",
        scenario=sc.name,
        passed=summary["converges"],
        margins={"limit": summary["limit"], "last_ratio": summary["last_ratio"],
                 "expected_ratio": 2.0 ** (sc.n - 2 * td.cert.a)},
        params={"t": t, "r": r, "levels": levels, "a": td.cert.a,
                "quadrature": "Gauss-Legendre in log radius, trapezoid in angle"},
        samples=levels,
        notes=notes,
        table=[{"R": r * 2**k, "partial_integral": s}
               for k, s in zip(range(1, levels + 1), summary["partial_sums"])],
    )


def basin_monte_carlo(scenario: Scenario, N: int | None = None, T: float | None = None,
                      delta: float | None = None, seed: int = 0, tol: float = DEFAULT_TOL):
    """Fraction of uniform initial points in the state box with |y(T)| < delta."""
    cfg = scenario.grid("basin")
    N = int(cfg["N"] if N is None else N)
    T = float(cfg["T"] if T is None else T)
    delta = float(cfg["delta"] if delta is None else delta)
    if delta <= 0:
        raise ValueError("capture radius must be positive")
    notes = []
    if not f_vanishes_at_origin(scenario):
        notes.append("f(t, 0) is not identically 0; the origin need not be an equilibrium")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 51]))
    y0 = _uniform_in(scenario.state_box(), N, rng)
    # absolute tolerance far below delta: transient growth of A(t) can amplify
    # absolute errors by many orders of magnitude before the final decay
    atol = tol * delta * BASIN_ATOL_FACTOR
    yT, failed = solve_batch(scenario.g, 0.0, T, y0, tol, atol=atol, on_failure="nan",
                             return_status=True)
    dist = np.linalg.norm(yT, axis=-1)
    attracted = ~failed & (dist < delta)
    frac = float(np.mean(attracted))
    if np.any(failed):
        notes.append(f"{int(np.sum(failed))} trajectories failed to integrate (counted as not attracted)")
    return VerificationReport(
        op="basin_monte_carlo",
        scenario=scenario.name,
        passed=frac == 1.0,
        margins={"attracted_fraction": frac, "failed": int(np.sum(failed)),
                 "max_final_norm": float(np.nanmax(dist)) if np.any(~failed) else float("nan")},
        params={"N": N, "T": T, "delta": delta, "integrator_tol": tol, "integrator_atol": atol,
                "state_box": scenario.state_box().tolist()},
        samples=N,
        seed=seed,
        notes=notes,
    )
