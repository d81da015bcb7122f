"""Adaptive integration, transition matrices and variational flows.

Everything here runs on scipy's DOP853 pair (8th order with embedded 5th/3rd
order error estimators). scipy measures the local error with an RMS norm, so
tolerances are divided by sqrt(state size) before being handed over; a step is
then accepted only if every component meets the requested tolerance.

Batched solves
--------------
Most verification sweeps need the same ODE solved for many initial points over
*different* time intervals. :func:`solve_batch` maps every interval
``[t_from[k], t_to[k]]`` onto ``u in [0, 1]`` and solves all of them as a single
system, so the heavy lifting happens in vectorized numpy. A zero-length
interval yields its initial value exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.integrate import DOP853, solve_ivp

DEFAULT_TOL = 1e-9
METHOD = "DOP853"


class IntegrationError(RuntimeError):
    """The integrator could not produce a solution."""


class StepSizeUnderflow(IntegrationError):
    """Step size collapsed; the problem is stiff or singular near ``t``."""


class NonFiniteField(IntegrationError):
    """The vector field returned inf/nan."""

    def __init__(self, t, y, index=None):
        self.t, self.y, self.index = t, y, index
        where = f" (sample {index})" if index is not None else ""
        super().__init__(f"non-finite field value at t={t!r}{where}")


def opnorm(M) -> np.ndarray | float:
    """Operator 2-norm (largest singular value); batched over leading axes."""
    M = np.asarray(M, dtype=float)
    sv = np.linalg.svd(M, compute_uv=False)
    out = sv[..., 0]
    return float(out) if out.ndim == 0 else out


def matvec(M, x):
    """Batched M x, summed in a fixed order so each row is batch-independent."""
    M = np.asarray(M, dtype=float)
    x = np.asarray(x, dtype=float)
    acc = M[..., :, 0] * x[..., None, 0]
    for j in range(1, M.shape[-1]):
        acc = acc + M[..., :, j] * x[..., None, j]
    return acc


def matmul(M, N):
    """Batched M @ N with the same fixed summation order as :func:`matvec`."""
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    acc = M[..., :, 0, None] * N[..., None, 0, :]
    for j in range(1, M.shape[-1]):
        acc = acc + M[..., :, j, None] * N[..., None, j, :]
    return acc


def trace(M):
    """Batched trace over the last two axes, summed in a fixed order."""
    M = np.asarray(M, dtype=float)
    acc = M[..., 0, 0]
    for j in range(1, M.shape[-1]):
        acc = acc + M[..., j, j]
    return acc


def _frob_dot(X, Y):
    flat_x = X.reshape(X.shape[0], -1)
    flat_y = Y.reshape(Y.shape[0], -1)
    acc = flat_x[:, 0] * flat_y[:, 0]
    for j in range(1, flat_x.shape[1]):
        acc = acc + flat_x[:, j] * flat_y[:, j]
    return acc


def _scaled_tol(tol: float, size: int) -> float:
    return tol / np.sqrt(max(size, 1))


@dataclass
class TimeDependentMatrix:
    """A matrix-valued function of time, t -> n x n.

    ``eval`` may be vectorized (array t -> (..., n, n)); scalar-only callables
    are looped over automatically.
    """

    eval: Callable
    dimension: int
    bound_hint: float | None = None

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim == 0:
            M = np.asarray(self.eval(float(t_arr)), dtype=float)
            return M.reshape(self.dimension, self.dimension)
        M = np.asarray(self.eval(t_arr), dtype=float)
        if M.shape == t_arr.shape + (self.dimension, self.dimension):
            return M
        flat = [np.asarray(self.eval(float(s)), dtype=float) for s in t_arr.ravel()]
        return np.stack(flat).reshape(t_arr.shape + (self.dimension, self.dimension))


@dataclass(frozen=True)
class Trajectory:
    """Solution nodes with cubic Hermite dense output.

    Nodes are stored in increasing time order whatever the integration
    direction; ``t0``/``t1`` record where the solve started and stopped.
    """

    t: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    tol: float
    t0: float
    t1: float
    order: int = 3
    nfev: int = 0

    @property
    def y0(self):
        return self.y[0] if self.t0 <= self.t1 else self.y[-1]

    @property
    def y_end(self):
        return self.y[-1] if self.t0 <= self.t1 else self.y[0]

    def __call__(self, t):
        t = float(t)
        lo, hi = self.t[0], self.t[-1]
        if t < lo or t > hi:
            raise ValueError(f"t={t} outside trajectory range [{lo}, {hi}]")
        if len(self.t) == 1:
            return self.y[0].copy()
        k = int(np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 2))
        ta, tb = self.t[k], self.t[k + 1]
        h = tb - ta
        s = (t - ta) / h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return (
            h00 * self.y[k]
            + h10 * h * self.dy[k]
            + h01 * self.y[k + 1]
            + h11 * h * self.dy[k + 1]
        )


def _checked(field, shape, counter):
    def rhs(t, yflat):
        counter[0] += 1
        y = yflat.reshape(shape)
        out = np.asarray(field(t, y), dtype=float)
        if not np.all(np.isfinite(out)):
            raise NonFiniteField(t, y)
        return out.ravel()

    return rhs


def _raise_on_failure(sol, t0, t1):
    if sol.status == -1:
        t_fail = sol.t[-1] if len(sol.t) else t0
        msg = sol.message or "integration failed"
        if "step size" in msg.lower():
            raise StepSizeUnderflow(
                f"step size underflow at t={t_fail!r} while integrating "
                f"[{t0}, {t1}]: {msg}"
            )
        raise IntegrationError(f"integration failed at t={t_fail!r}: {msg}")


def integrate_ivp(field, t0, y0, t1, tol=DEFAULT_TOL, t_eval=None, atol=None) -> Trajectory:
    """Solve y' = field(t, y) from (t0, y0) to t1; backward if t1 < t0.

    ``y0`` may have any shape; ``field`` receives and returns arrays of that
    shape. ``t_eval`` adds nodes at the given times. ``atol`` defaults to
    ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    t0, t1 = float(t0), float(t1)
    y0 = np.array(y0, dtype=float)
    shape = y0.shape
    counter = [0]
    rhs = _checked(field, shape, counter)
    if t0 == t1:
        dy = rhs(t0, y0.ravel()).reshape(shape)
        return Trajectory(np.array([t0]), y0[None].copy(), dy[None], tol, t0, t1, nfev=1)
    rt = _scaled_tol(tol, y0.size)
    at = rt if atol is None else _scaled_tol(atol, y0.size)
    sol = solve_ivp(
        rhs, (t0, t1), y0.ravel(), method=METHOD, rtol=rt, atol=at, dense_output=True
    )
    _raise_on_failure(sol, t0, t1)
    nodes = np.asarray(sol.sol.ts, dtype=float)
    if t_eval is not None:
        extra = np.asarray(t_eval, dtype=float).ravel()
        lo, hi = min(t0, t1), max(t0, t1)
        if np.any(extra < lo - 1e-12) or np.any(extra > hi + 1e-12):
            raise ValueError("t_eval outside the integration interval")
        nodes = np.concatenate([nodes, np.clip(extra, lo, hi)])
    nodes = np.unique(nodes)
    ys = sol.sol(nodes).T.reshape((len(nodes),) + shape)
    # endpoints exactly as solved, not interpolated
    i0 = 0 if t0 < t1 else len(nodes) - 1
    i1 = len(nodes) - 1 - i0
    ys[i0] = y0
    ys[i1] = sol.y[:, -1].reshape(shape)
    nodes[i0], nodes[i1] = t0, t1
    dys = np.stack([rhs(tk, yk.ravel()).reshape(shape) for tk, yk in zip(nodes, ys)])
    return Trajectory(nodes, ys, dys, tol, t0, t1, nfev=counter[0])


_TABLEAU = (DOP853.A, DOP853.B, DOP853.C, DOP853.E3, DOP853.E5)
_STAGES = DOP853.n_stages
_ERR_EXP = -1.0 / (DOP853.error_estimator_order + 1)
SAFETY, MIN_FACTOR, MAX_FACTOR = 0.9, 0.2, 10.0
MAX_ITERATIONS = 200_000


def _rms(x):
    acc = x[..., 0] * x[..., 0]
    for j in range(1, x.shape[-1]):
        acc = acc + x[..., j] * x[..., j]
    return np.sqrt(acc / x.shape[-1])


def _combine(coef, K, count):
    """sum_s coef[s] K[s] accumulated in a fixed order.

    Plain elementwise arithmetic keeps every sample's result independent of
    the batch it sits in (reductions such as einsum may regroup sums).
    """
    acc = coef[0] * K[0]
    for st in range(1, count):
        if coef[st] != 0.0:
            acc = acc + coef[st] * K[st]
    return acc


def solve_batch(rhs, t_from, t_to, y0, tol=DEFAULT_TOL, atol=None, on_failure="raise",
                return_status=False):
    """Integrate many initial points, each over its own time interval.

    Every interval ``[t_from[k], t_to[k]]`` is mapped onto ``u in [0, 1]`` and
    all samples advance together through the DOP853 stages, but each sample
    carries its own step size and error test. A sample's result therefore
    does not depend on which other samples share the batch, which keeps
    chunked and parallel sweeps bit-for-bit reproducible.

    Parameters
    ----------
    rhs : callable
        ``rhs(t, y)`` with ``t`` of shape (N,) and ``y`` of shape (N, k),
        returning (N, k).
    t_from, t_to : float or array (N,)
        Interval endpoints per sample; either order.
    y0 : array (N, k)
    atol : float or array (k,), optional
        Absolute tolerance, per component if an array; defaults to ``tol``.
    on_failure : {"raise", "nan"}
        A sample whose step size underflows (typically a blow-up) either
        raises, or gets a nan row and is reported in the status mask.

    Returns
    -------
    array (N, k) holding each sample's state at its ``t_to``; with
    ``return_status`` also a boolean mask of samples that failed.
    """
    y0 = np.array(y0, dtype=float)
    if y0.ndim != 2:
        raise ValueError("y0 must have shape (N, k)")
    if not tol > 0:
        raise ValueError("tol must be positive")
    N, k = y0.shape
    a = np.broadcast_to(np.asarray(t_from, dtype=float), (N,)).copy()
    b = np.broadcast_to(np.asarray(t_to, dtype=float), (N,)).copy()
    span = b - a
    rtol = _scaled_tol(tol, k)
    atol = rtol if atol is None else _scaled_tol(np.asarray(atol, dtype=float), k)

    def field(idx, u, y):
        out = np.asarray(rhs(a[idx] + u * span[idx], y), dtype=float)
        return out * span[idx, None]

    y = y0.copy()
    failed = np.zeros(N, dtype=bool)
    active = np.flatnonzero(span != 0)
    if len(active):
        if not np.all(np.isfinite(y0[active])):
            raise ValueError("non-finite initial values")
        f0 = field(active, np.zeros(len(active)), y[active])
        bad = ~np.all(np.isfinite(f0), axis=1)
        if np.any(bad):
            i = int(active[np.flatnonzero(bad)[0]])
            if on_failure == "raise":
                raise NonFiniteField(float(a[i]), y0[i], index=i)
            failed[active[bad]] = True
            active, f0 = active[~bad], f0[~bad]
        _integrate_unit(field, y, active, f0, rtol, atol, failed, on_failure, a, span)
    y[failed] = np.nan
    return (y, failed) if return_status else y


def _initial_step(field, idx, y0, f0, rtol, atol):
    scale = atol + np.abs(y0) * rtol
    d0, d1 = _rms(y0 / scale), _rms(f0 / scale)
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.where(d1 > 0, d1, 1.0))
    h0 = np.minimum(h0, 1.0)
    f1 = field(idx, h0, y0 + h0[:, None] * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    big = np.maximum(d1, d2)
    with np.errstate(divide="ignore", invalid="ignore"):
        h1 = np.where(big <= 1e-15, np.maximum(1e-6, h0 * 1e-3),
                      (0.01 / np.where(big > 0, big, 1.0)) ** (1.0 / 8.0))
    h = np.minimum(np.minimum(100 * h0, h1), 1.0)
    return np.where(np.isfinite(h) & (h > 0), h, 1e-6)


def _integrate_unit(field, y, active, f, rtol, atol, failed, on_failure, a, span):
    """Advance rows ``active`` of ``y`` in place from u = 0 to u = 1."""
    A, B, C, E3, E5 = _TABLEAU
    u = np.zeros(len(active))
    h = _initial_step(field, active, y[active], f, rtol, atol)
    rejected = np.zeros(len(active), dtype=bool)
    yy = y[active]
    for _ in range(MAX_ITERATIONS):
        if len(active) == 0:
            return
        min_step = 10 * np.abs(np.nextafter(u, np.inf) - u)
        h = np.maximum(h, min_step)
        h = np.minimum(h, 1.0 - u)
        last = h >= 1.0 - u
        K = np.empty((_STAGES + 1,) + yy.shape)
        K[0] = f
        for st in range(1, _STAGES):
            dy = _combine(A[st], K, st) * h[:, None]
            K[st] = field(active, u + C[st] * h, yy + dy)
        y_new = yy + h[:, None] * _combine(B, K, _STAGES)
        u_new = np.where(last, 1.0, u + h)
        f_new = field(active, u_new, y_new)
        K[-1] = f_new
        scale = atol + np.maximum(np.abs(yy), np.abs(y_new)) * rtol
        err5 = _rms(_combine(E5, K, _STAGES + 1) / scale) ** 2
        err3 = _rms(_combine(E3, K, _STAGES + 1) / scale) ** 2
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            denom = err5 + 0.01 * err3
            err = np.where(denom > 0, h * err5 / np.sqrt(np.where(denom > 0, denom, 1.0)), 0.0)
            ok = np.isfinite(err) & (err < 1) & np.all(np.isfinite(f_new), axis=1)
            grow = np.where(err == 0, MAX_FACTOR,
                            np.minimum(MAX_FACTOR, SAFETY * err ** _ERR_EXP))
            shrink = np.where(np.isfinite(err),
                              np.maximum(MIN_FACTOR, SAFETY * err ** _ERR_EXP), MIN_FACTOR)
        grow = np.where(rejected, np.minimum(1.0, grow), grow)
        yy = np.where(ok[:, None], y_new, yy)
        f = np.where(ok[:, None], f_new, f)
        u = np.where(ok, u_new, u)
        h = np.where(ok, h * grow, h * shrink)
        rejected = ~ok
        done = ok & last
        dead = ~ok & (h < min_step)
        if np.any(dead):
            i = int(active[np.flatnonzero(dead)[0]])
            if on_failure == "raise":
                t_fail = float(a[i] + u[np.flatnonzero(dead)[0]] * span[i])
                raise StepSizeUnderflow(
                    f"step size underflow at t={t_fail!r} for sample {i}; "
                    "the solution blows up or the problem is stiff there"
                )
            failed[active[dead]] = True
        finished = done | dead
        if np.any(finished):
            y[active[done]] = yy[done]
            keep = ~finished
            active, yy, f, u, h, rejected = (
                active[keep], yy[keep], f[keep], u[keep], h[keep], rejected[keep]
            )
    raise IntegrationError(f"batch integration did not finish in {MAX_ITERATIONS} steps")


def _as_batch(t_from, t_to, points, n):
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1 and np.ndim(t_from) == 0 and np.ndim(t_to) == 0
    pts = np.atleast_2d(pts)
    N = np.broadcast_shapes(pts.shape[:1], np.shape(t_from), np.shape(t_to))[0]
    pts = np.broadcast_to(pts, (N, n))
    return single, N, pts


def solve_linear_batch(A, t_from, t_to, Y0, tol=DEFAULT_TOL):
    """Y(t_to) for the homogeneous system Y' = A(t) Y, batched.

    ``Y0`` has shape (N, n, m). Each sample is written as Y = |Y0| e^c Z with
    |Z| = 1 kept fixed by c' = <Z, AZ> and Z' = AZ - c'Z (Frobenius inner
    product), so the error control is relative to the size of Y however far
    it decays or grows.
    """
    Y0 = np.array(Y0, dtype=float)
    N, n, m = Y0.shape
    nu = np.sqrt(_frob_dot(Y0, Y0))
    safe = np.where(nu > 0, nu, 1.0)
    Z0 = (Y0.reshape(N, -1) / safe[:, None])
    k = n * m

    def rhs(t, state):
        Z = state[:, :k].reshape(-1, n, m)
        AZ = matmul(A(t), Z)
        zz = _frob_dot(Z, Z)
        rate = _frob_dot(Z, AZ) / np.where(zz > 0, zz, 1.0)
        dZ = AZ - rate[:, None, None] * Z
        return np.concatenate([dZ.reshape(-1, k), rate[:, None]], axis=1)

    state0 = np.concatenate([Z0, np.zeros((N, 1))], axis=1)
    out = solve_batch(rhs, t_from, t_to, state0, tol)
    Y = out[:, :k] * (safe * np.exp(out[:, k]))[:, None]
    Y[nu == 0] = 0.0
    return Y.reshape(N, n, m)


def transition_matrix(A, s, t, tol=DEFAULT_TOL):
    """X(t, s): solves M' = A(tau) M, M(s) = I from tau = s to tau = t.

    ``s`` and ``t`` may be arrays of equal length, giving a stack (N, n, n).
    """
    n = A.dimension
    if np.any(np.minimum(s, t) < 0):
        raise ValueError("transition_matrix requires s, t >= 0")
    single = np.ndim(s) == 0 and np.ndim(t) == 0
    N = 1 if single else np.broadcast_shapes(np.shape(s), np.shape(t))[0]
    eye = np.broadcast_to(np.eye(n), (N, n, n))
    out = solve_linear_batch(A, s, t, eye, tol)
    return out[0] if single else out


def linear_flow(A, t_from, t_to, x, tol=DEFAULT_TOL):
    """x(t_to, t_from, x) for x' = A(t)x, batched like :func:`solve_batch`."""
    n = A.dimension
    single, N, pts = _as_batch(t_from, t_to, x, n)
    out = solve_linear_batch(A, t_from, t_to, pts[:, :, None], tol)[:, :, 0]
    return out[0] if single else out


def nonlinear_flow(scenario, t_from, t_to, y, tol=DEFAULT_TOL):
    """y(t_to, t_from, y) for y' = A(t)y + f(t, y), batched."""
    single, N, pts = _as_batch(t_from, t_to, y, scenario.n)
    out = solve_batch(scenario.g, t_from, t_to, pts, tol)
    return out[0] if single else out


def _variational_rhs(scenario):
    n = scenario.n

    def rhs(t, state):
        y = state[:, :n]
        J = state[:, n:].reshape(-1, n, n)
        Dg = scenario.A(t) + scenario.Df(t, y)
        return np.concatenate([scenario.g(t, y), matmul(Dg, J).reshape(len(y), n * n)], axis=1)

    return rhs


def flow_and_jacobian(scenario, tau, eta, t, tol=DEFAULT_TOL):
    """Return y(t, tau, eta) and dy/deta(t, tau, eta).

    The Jacobian solves the variational system with coefficient
    A(t) + Df(t, y(t)) and identity initial value at tau, integrated jointly
    with the flow. Batched over ``eta`` rows and array-valued tau/t.
    """
    n = scenario.n
    if scenario.r < 1:
        raise ValueError(f"scenario {scenario.name!r} declares r = 0; Df unavailable")
    single, N, pts = _as_batch(tau, t, eta, n)
    state0 = np.concatenate([pts, np.broadcast_to(np.eye(n).ravel(), (N, n * n))], axis=1)
    out = solve_batch(_variational_rhs(scenario), tau, t, state0, tol)
    y, J = out[:, :n], out[:, n:].reshape(N, n, n)
    return (y[0], J[0]) if single else (y, J)


def liouville_det_check(scenario, tau, eta, t, tol=DEFAULT_TOL, rtol_check=1e-5, check=True):
    """det dy/deta against exp(int_tau^t tr[A + Df](s, y(s)) ds).

    The trace integral is obtained from a separate solve of the flow augmented
    by a scalar accumulator, independent of the matrix variational system.
    """
    n = scenario.n
    _, J = flow_and_jacobian(scenario, tau, eta, t, tol)
    det = np.linalg.det(J)
    single, N, pts = _as_batch(tau, t, eta, n)

    def rhs(s, state):
        y = state[:, :n]
        tr = scenario.div_g(s, y)
        return np.concatenate([scenario.g(s, y), tr[:, None]], axis=1)

    out = solve_batch(rhs, tau, t, np.concatenate([pts, np.zeros((N, 1))], axis=1), tol)
    quad = np.exp(out[:, n])
    if single:
        quad = float(quad[0])
        det = float(det)
    if check:
        if np.any(np.asarray(det) <= 0):
            raise IntegrationError("variational determinant is not positive")
        rel = np.max(np.abs(np.asarray(det) - quad) / np.abs(quad))
        if rel > rtol_check:
            raise IntegrationError(
                f"Liouville disagreement {rel:.3e} > {rtol_check:g}: integrator or Df bug"
            )
    return det, quad


@dataclass
class PropagatorTable:
    """Transition matrices X(t_j, t_i), j >= i, on a time grid.

    ``blocks[j, i]`` holds X(t_j, t_i); entries with j < i are nan.
    """

    grid: np.ndarray
    blocks: np.ndarray
    tol: float
    meta: dict = dc_field(default_factory=dict)

    @classmethod
    def build(cls, A, grid, tol=DEFAULT_TOL) -> "PropagatorTable":
        """Every column is advanced segment by segment, so grid nodes are hit
        exactly rather than interpolated."""
        grid = np.asarray(grid, dtype=float)
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        n, m = A.dimension, len(grid)
        blocks = np.full((m, m, n, n), np.nan)
        for i in range(m):
            blocks[i, i] = np.eye(n)
        # all columns share the segment [t_{j-1}, t_j], so advance them together
        for j in range(1, m):
            blocks[j, :j] = solve_linear_batch(A, grid[j - 1], grid[j], blocks[j - 1, :j], tol)
        return cls(grid, blocks, tol, {"nodes": "exact (solver restarted at each node)"})

    def __call__(self, j: int, i: int) -> np.ndarray:
        if j < i:
            raise IndexError("table holds forward blocks only (t_j >= t_i)")
        return self.blocks[j, i]

    def pairs(self):
        m = len(self.grid)
        for i in range(m):
            for j in range(i, m):
                yield j, i

    def identity_defect(self) -> float:
        n = self.blocks.shape[-1]
        return float(
            max(np.max(np.abs(self.blocks[i, i] - np.eye(n))) for i in range(len(self.grid)))
        )

    def cocycle_defect(self) -> float:
        """max |X(t,s)X(s,r) - X(t,r)| / (|X(t,s)||X(s,r)|) over grid triples r <= s <= t."""
        m = len(self.grid)
        worst = 0.0
        for r in range(m):
            for s in range(r, m):
                prod = self.blocks[s:, s] @ self.blocks[s, r]
                ref = self.blocks[s:, r]
                scale = opnorm(self.blocks[s:, s]) * opnorm(self.blocks[s, r])
                err = opnorm(prod - ref) / scale
                worst = max(worst, float(np.max(err)))
        return worst
