import math

import numpy as np
import pytest

from nhg.quadrature import QuadratureError, adaptive_simpson, cumulative_integral


@pytest.mark.parametrize("fn, a, b, exact", [
    (math.sin, 0.0, math.pi, 2.0),
    (math.exp, 0.0, 1.0, math.e - 1),
    (lambda x: 1 / (1 + x * x), 0.0, 1.0, math.pi / 4),
    (lambda x: x**-2, 1.0, 3.0, 2 / 3),
    (lambda x: x**3, -1.0, 2.0, 3.75),
])
def test_known_integrals(fn, a, b, exact):
    assert adaptive_simpson(fn, a, b, 1e-12) == pytest.approx(exact, abs=1e-10)


def test_reversed_limits_flip_sign():
    assert adaptive_simpson(math.cos, 1.0, 0.0) == pytest.approx(-math.sin(1.0), abs=1e-12)


def test_empty_interval():
    assert adaptive_simpson(math.exp, 2.0, 2.0) == 0.0


def test_nonfinite_integrand_raises():
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda x: float("nan"), 0.0, 1.0)


def test_depth_limit_raises():
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda x: 0.0 if x < 0.3 else 1.0, 0.0, 1.0, tol=1e-15, max_depth=5)


def test_cumulative_matches_closed_form():
    grid = np.linspace(0.0, 2.0, 9)
    out = cumulative_integral(lambda s: math.exp(-s), grid)
    np.testing.assert_allclose(out, 1 - np.exp(-grid), atol=1e-11)
