"""Adaptive Simpson quadrature and running integrals over a grid."""

from __future__ import annotations

import math

import numpy as np

MAX_DEPTH = 50


class QuadratureError(RuntimeError):
    """Adaptive refinement hit the depth limit before meeting the tolerance."""


def _simpson(fa, fm, fb, h):
    return h * (fa + 4.0 * fm + fb) / 6.0


def adaptive_simpson(fn, a: float, b: float, tol: float = 1e-10, max_depth: int = MAX_DEPTH):
    """Integrate a scalar function over [a, b] to absolute tolerance ``tol``.

    Classic recursive Simpson with the Richardson correction (S2 - S1)/15 on
    accepted panels. Raises :class:`QuadratureError` if a panel still fails
    the local test at ``max_depth``.
    """
    a, b = float(a), float(b)
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    fa, fm, fb = float(fn(a)), float(fn(0.5 * (a + b))), float(fn(b))
    whole = _simpson(fa, fm, fb, b - a)
    # explicit stack instead of recursion: (a, b, fa, fm, fb, whole, tol, depth)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    while stack:
        lo, hi, flo, fmid, fhi, est, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        fl = float(fn(0.5 * (lo + mid)))
        fr = float(fn(0.5 * (mid + hi)))
        left = _simpson(flo, fl, fmid, mid - lo)
        right = _simpson(fmid, fr, fhi, hi - mid)
        delta = left + right - est
        if not math.isfinite(delta):
            raise QuadratureError(f"non-finite integrand on [{lo}, {hi}]")
        if abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        elif depth >= max_depth:
            raise QuadratureError(
                f"no convergence on [{lo}, {hi}] after {max_depth} bisections"
            )
        else:
            stack.append((lo, mid, flo, fl, fmid, left, 0.5 * eps, depth + 1))
            stack.append((mid, hi, fmid, fr, fhi, right, 0.5 * eps, depth + 1))
    return sign * total


def cumulative_integral(fn, grid, tol: float = 1e-10) -> np.ndarray:
    """Running integral int_{grid[0]}^{grid[k]} fn, panel by panel."""
    grid = np.asarray(grid, dtype=float)
    out = np.zeros(len(grid))
    for k in range(1, len(grid)):
        out[k] = out[k - 1] + adaptive_simpson(fn, grid[k - 1], grid[k], tol)
    return out
