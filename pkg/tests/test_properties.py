import csv
import io
import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from nhg.conjugacy import ConjugacyMap
from nhg.contraction import compute_pq
from nhg.expr import Expr
from nhg.lyapunov import build_S, eval_rho_linear
from nhg.ode import opnorm, solve_batch, transition_matrix
from nhg.report import jsonable, rows_to_csv
from nhg.scenario import load_scenario

slow = settings(max_examples=15, deadline=None,
                suppress_health_check=[HealthCheck.function_scoped_fixture])
finite = st.floats(-1e6, 1e6, allow_nan=False)


@slow
@given(seed=st.integers(0, 2**32 - 1), size=st.integers(1, 12))
def test_batch_rows_are_independent(seed, size):
    rng = np.random.default_rng(seed)
    y0 = rng.normal(size=(size, 2))
    t1 = rng.uniform(-3, 3, size)

    def rhs(t, y):
        return np.stack([y[:, 1], -np.sin(y[:, 0]) - 0.3 * y[:, 1] * np.cos(t)], axis=1)

    full = solve_batch(rhs, 0.0, t1, y0)
    perm = rng.permutation(size)
    shuffled = solve_batch(rhs, 0.0, t1[perm], y0[perm])
    assert np.array_equal(full[perm], shuffled)


@slow
@given(times=st.lists(st.floats(0, 10), min_size=3, max_size=3))
def test_transition_cocycle(scenarios, times):
    r, s, t = sorted(times)
    A = scenarios["uniform-2d"].A
    lhs = transition_matrix(A, s, t) @ transition_matrix(A, r, s)
    rhs = transition_matrix(A, r, t)
    assert opnorm(lhs - rhs) <= 1e-8 * max(1.0, opnorm(rhs))


@slow
@given(lam=st.floats(0.01, 100), t=st.floats(0, 10),
       x=st.tuples(st.floats(-5, 5), st.floats(-5, 5)).filter(lambda v: np.hypot(*v) > 1e-3))
def test_linear_density_homogeneity(certificates, lam, t, x):
    cert = certificates("uniform-2d")
    x = np.array([x])
    scaled = eval_rho_linear(cert, t, lam * x)
    assert scaled == pytest.approx(lam ** (-2 * cert.a) * eval_rho_linear(cert, t, x), rel=1e-12)


@slow
@given(k=st.floats(1.0, 3.0), m=st.floats(0.1, 1.0))
def test_certificate_constant_fixed_point(k, m):
    # A = -k, mu = exp(m t): 0 = 2 k S - (1 + S) m at S = m / (2k - m)
    sc = load_scenario({
        "name": "fixed", "dimension": 1, "A": [[repr(-k)]], "f": ["0"], "beta": "0",
        "gamma": "0", "D": "1", "mu": f"exp({m!r}*t)", "mu_prime": f"{m!r}*exp({m!r}*t)",
        "alpha": 1.0, "r": 2, "T_max": 5.0,
    })
    S_star = m / (2 * k - m)
    cert = build_S(sc, K=1.0, sigma=S_star, nodes=101)
    np.testing.assert_allclose(cert.S[:, 0, 0], S_star, rtol=1e-8, atol=1e-10)


@pytest.fixture(scope="module")
def uniform_map(scenarios):
    sc = scenarios["uniform-1d"]
    return sc, ConjugacyMap(sc, 1e-10, cache=False), compute_pq(sc).margins["p"]


@slow
@given(t=st.floats(0, 5), eta=st.floats(-4, 4))
def test_conjugacy_roundtrip_and_bound(uniform_map, t, eta):
    sc, cmap, p = uniform_map
    pt = np.array([[eta]])
    G = cmap.G(t, pt)
    assert abs(G[0, 0] - eta) <= p + 1e-8
    assert cmap.H(t, G)[0, 0] == pytest.approx(eta, abs=1e-7)


@settings(max_examples=50, deadline=None)
@given(a=finite, b=finite, c=finite, t=st.floats(-10, 10))
def test_polynomial_expressions(a, b, c, t):
    e = Expr(f"({a!r})*t^2 + ({b!r})*t + ({c!r})")
    assert e(t) == pytest.approx(a * t * t + b * t + c, rel=1e-12, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.recursive(
    st.floats() | st.integers() | st.booleans() | st.text(max_size=5),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=5), inner,
                                                                 max_size=4),
    max_leaves=20))
def test_jsonable_output_is_strict_json(value):
    text = json.dumps(jsonable(value), allow_nan=False)
    assert json.loads(text) == jsonable(value)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=10))
def test_csv_floats_roundtrip(values):
    rows = [{"k": i, "v": v} for i, v in enumerate(values)]
    back = list(csv.DictReader(io.StringIO(rows_to_csv(rows))))
    assert [float(r["v"]) for r in back] == values
