import numpy as np
import pytest
from scipy.integrate import solve_ivp

from nhg.conjugacy import (
    ConjugacyMap,
    HorizonError,
    check_boundedness,
    check_jacobian,
    equilibrium_diagnostics,
    map_G,
    map_H,
    properness_probe,
    sample_conjugacy_points,
    verify_equivalence,
)
from nhg.contraction import compute_pq
from nhg.scenario import load_scenario


def test_identity_when_unperturbed(linear_1d):
    eta = np.array([[0.5], [-2.0]])
    assert np.array_equal(map_G(linear_1d, np.array([1.0, 3.0]), eta), eta)
    assert np.array_equal(map_H(linear_1d, np.array([1.0, 3.0]), eta), eta)


def test_identity_at_time_zero(scenarios):
    sc = scenarios["uniform-2d"]
    eta = np.array([[0.5, 1.0], [-2.0, 0.1]])
    cmap = ConjugacyMap(sc)
    assert np.array_equal(cmap.G(0.0, eta), eta)
    assert np.array_equal(cmap.H(0.0, eta), eta)


def test_G_against_scipy_route(scenarios):
    """Backward solve, then the integral for w by quadrature on scipy's dense output."""
    sc = scenarios["uniform-1d"]
    t, eta = 2.0, 1.5
    back = solve_ivp(lambda s, y: sc.g(s, y[None])[0], (t, 0.0), [eta], method="DOP853",
                     rtol=1e-12, atol=1e-14, dense_output=True)

    def rhs(s, w):
        y = back.sol(s)
        return [-w[0] - sc.f(s, y[None])[0, 0]]

    w = solve_ivp(rhs, (0.0, t), [0.0], method="DOP853", rtol=1e-12, atol=1e-14).y[0, -1]
    assert map_G(sc, t, np.array([eta]))[0] == pytest.approx(eta + w, abs=1e-9)


@pytest.mark.parametrize("name", ["uniform-2d", "mu-poly", "lipschitz-decay"])
def test_G_against_quadrature_route(name, scenarios):
    sc = scenarios[name]
    tau, pts, _ = sample_conjugacy_points(sc, 6, seed=2)
    cmap = ConjugacyMap(sc)
    np.testing.assert_allclose(cmap.G(tau, pts), cmap.G_quadrature(tau, pts), atol=1e-8)


def test_picard_iteration_converges_to_H(scenarios):
    sc = scenarios["uniform-1d"]
    xi = np.array([1.2])
    cmap = ConjugacyMap(sc)
    out = cmap.picard_crosscheck(3.0, xi, nodes=801, iterations=6)
    q = compute_pq(sc).margins["q"]
    assert all(r <= q + 1e-3 for r in out["ratios"])
    assert out["z_t"][0] == pytest.approx(cmap.H(3.0, xi)[0] - xi[0], abs=1e-6)


def test_cache_returns_fresh_values(scenarios):
    sc = scenarios["uniform-2d"]
    tau, pts, _ = sample_conjugacy_points(sc, 10, seed=4)
    cached = ConjugacyMap(sc)
    first = cached.G(tau, pts)
    second = cached.G(tau[::-1], pts[::-1])[::-1]
    fresh = ConjugacyMap(sc, cache=False).G(tau, pts)
    assert np.array_equal(first, second)
    assert np.array_equal(first, fresh)
    cached.clear_cache()


def test_horizon_is_enforced(scenarios):
    sc = scenarios["uniform-1d"]
    with pytest.raises(HorizonError):
        map_G(sc, sc.T_max + 1, np.array([1.0]))
    with pytest.raises(HorizonError):
        map_H(sc, -0.5, np.array([1.0]))


@pytest.mark.parametrize("name", ["uniform-2d", "nonuniform-bv", "lipschitz-decay"])
def test_equivalence_and_bounds(name, scenarios):
    sc = scenarios[name]
    samples = sample_conjugacy_points(sc, 20, seed=6)
    cmap = ConjugacyMap(sc)
    eq = verify_equivalence(sc, samples, cmap=cmap)
    assert eq.passed, eq.margins
    assert eq.margins["min_det_J"] > 0
    assert check_boundedness(sc, samples, cmap=cmap).passed


@pytest.mark.parametrize("name", ["uniform-2d", "lipschitz-decay"])
def test_jacobian_routes_agree(name, scenarios):
    sc = scenarios[name]
    tau, pts, _ = sample_conjugacy_points(sc, 8, seed=7)
    rep = check_jacobian(sc, (tau, pts))
    assert rep.passed
    assert rep.margins["max_rel_err_integral_form"] < 1e-6


def test_fused_G_and_jacobian(scenarios):
    sc = scenarios["uniform-2d"]
    tau, pts, _ = sample_conjugacy_points(sc, 8, seed=8)
    cmap = ConjugacyMap(sc)
    G, J, det = cmap.G_and_jacobian(tau, pts)
    J2, det2 = cmap.jacobian_G(tau, pts)
    np.testing.assert_allclose(G, cmap.G(tau, pts), atol=1e-8)
    np.testing.assert_allclose(J, J2, atol=1e-8)
    np.testing.assert_allclose(det, np.linalg.det(J), rtol=1e-12)


def test_equilibrium_at_origin_is_fixed(scenarios):
    rep = equilibrium_diagnostics(scenarios["uniform-1d"])
    assert rep.passed
    assert rep.margins["max_G_minus_linear"] == 0.0


def test_no_equilibrium_declared(scenarios):
    cfg = dict(scenarios["uniform-1d"].config)
    cfg.pop("equilibrium")
    sc = load_scenario(cfg)
    assert sc.equilibrium is None
    rep = equilibrium_diagnostics(sc)
    assert rep.passed
    assert "skipped" in rep.notes[0]


@pytest.mark.parametrize("name", ["uniform-1d", "uniform-2d"])
def test_properness(name, scenarios):
    assert properness_probe(scenarios[name], 2.0).passed
