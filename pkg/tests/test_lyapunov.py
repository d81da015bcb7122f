import numpy as np
import pytest

from nhg.lyapunov import (
    CertificateError,
    LyapunovCertificate,
    build_S,
    certificate_slack,
    choose_a,
    eval_rho_linear,
    five_point_derivative,
    integrability_floor,
    integrability_summary,
    linear_integrability,
    shell_integrals,
    verify_certificate,
    verify_linear_density,
)
from nhg.scenario import BUILTIN_NAMES, load_scenario


def scalar(A, mu="exp(t)", mu_prime="exp(t)", T_max=10.0, n=1):
    rows = [[A if i == j else "0" for j in range(n)] for i in range(n)]
    return load_scenario({
        "name": "scalar", "dimension": n, "A": rows, "f": ["0"] * n, "beta": "0", "gamma": "0",
        "D": "1", "mu": mu, "mu_prime": mu_prime, "alpha": 1.0, "r": 2, "T_max": T_max,
    })


def test_five_point_derivative_exact_on_quartics():
    t = np.linspace(0, 2, 21)
    d = five_point_derivative(t**4 - 3 * t, t[1] - t[0])
    np.testing.assert_allclose(d, 4 * t**3 - 3, atol=1e-11)
    with pytest.raises(ValueError):
        five_point_derivative(np.ones(4), 0.1)


def test_uniform_fixed_point(scenarios):
    sc = scenarios["uniform-1d"]
    cert = build_S(sc, K=1.0, sigma=1.0)
    np.testing.assert_allclose(cert.S[:, 0, 0], 1.0, atol=1e-12)
    assert cert.C == pytest.approx(1.01)
    rep = verify_certificate(sc, cert)
    assert rep.passed
    assert abs(rep.margins["min_slack"]) < 1e-10


def test_algebraic_fixed_point():
    # 0 = 4 S - (1 + S) at S = 1/3
    cert = build_S(scalar("-2"), K=1.0, sigma=1 / 3)
    np.testing.assert_allclose(cert.S[:, 0, 0], 1 / 3, atol=1e-9)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_certificates(name, scenarios, certificates):
    sc = scenarios[name]
    cert = certificates(name)
    rep = verify_certificate(sc, cert)
    assert rep.passed, rep.margins
    assert rep.margins["min_relative_slack"] >= -1e-8
    assert cert.a > sc.n / 2


def test_tampered_certificate_fails(scenarios):
    sc = scenarios["uniform-1d"]
    good = build_S(sc)
    bad = LyapunovCertificate(good.times, np.full_like(good.S, 0.1), 1.0, good.C, 1.0)
    # -(0 - 0.2) - 1.1 = -0.9
    slack = certificate_slack(sc, bad)
    np.testing.assert_allclose(slack, -0.9, atol=1e-12)
    rep = verify_certificate(sc, bad)
    assert not rep.passed
    assert rep.margins["inequality"] is False


def test_norm_bound_violation_flagged(scenarios):
    sc = scenarios["uniform-1d"]
    good = build_S(sc)
    S = good.S.copy()
    S[100] *= 2
    rep = verify_certificate(sc, LyapunovCertificate(good.times, S, 1.0, good.C, 1.0))
    assert rep.margins["norm_bound"] is False
    assert any("C D^2" in n for n in rep.notes)


def test_bad_parameters_and_lost_definiteness(monkeypatch):
    with pytest.raises(ValueError):
        build_S(scalar("-1"), K=0.0)
    with pytest.raises(ValueError):
        build_S(scalar("-1"), sigma=-1.0)
    # mu' > 0 keeps S definite, so emulate a bad solve with a field pushing S through zero
    import nhg.lyapunov as lyap
    monkeypatch.setattr(lyap, "lyapunov_rhs", lambda sc, K: lambda t, y: np.ones_like(y))
    with pytest.raises(CertificateError, match="sigma"):
        build_S(scalar("-1"), sigma=1.0)


def test_choose_a_closed_forms(scenarios, certificates):
    assert certificates("uniform-1d").a == 1.0
    a, info = choose_a(scenarios["uniform-2d"], build_S(scenarios["uniform-2d"]))
    assert a == 2.0 and info["integrability_floor"] == 2.0
    assert integrability_floor(1) == 1.0
    assert integrability_floor(3) == 2.0
    assert integrability_floor(4) == 4.0


def test_choose_a_grid_search_oracle():
    sc = scalar("-5", mu="exp(0.1*t)", mu_prime="0.1*exp(0.1*t)")
    cert = build_S(sc)
    S = cert.S[:, 0, 0]
    # 0.1 a (1 + S) - 5 S >= eps at every node
    needed = np.max((5 * S + 1e-6) / (0.1 * (1 + S)))
    a, info = choose_a(sc, cert)
    assert needed <= a <= 1.1 * needed
    assert info["achieved_margin"] >= 1e-6


def test_choose_a_gives_up():
    sc = scalar("-5", mu="exp(1e-9*t)", mu_prime="1e-9*exp(1e-9*t)")
    cert = build_S(sc, sigma=1.0)
    with pytest.raises(ValueError, match="no a"):
        choose_a(sc, cert, a_max=2.0**10)


def test_rho_closed_form_homogeneity_and_bound(scenarios, certificates):
    sc = scenarios["uniform-1d"]
    cert = certificates("uniform-1d")
    x = np.array([[0.5], [-2.0], [3.0]])
    t = np.array([1.0, 2.0, 1.0])
    np.testing.assert_allclose(eval_rho_linear(cert, t, x, sc), x[:, 0] ** -2.0, rtol=1e-12)
    np.testing.assert_allclose(eval_rho_linear(cert, t, 2 * x),
                               2.0 ** (-2 * cert.a) * eval_rho_linear(cert, t, x), rtol=1e-14)
    with pytest.raises(ValueError, match="origin"):
        eval_rho_linear(cert, 1.0, np.zeros((1, 1)))
    with pytest.raises(ValueError):
        eval_rho_linear(cert, sc.T_max + 1, x[:1])


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_linear_density_positive(name, scenarios, certificates):
    rep = verify_linear_density(scenarios[name], certificates(name), seed=1)
    assert rep.passed
    assert rep.margins["fraction_positive"] == 1.0


def test_mu_poly_thousand_samples(scenarios, certificates):
    from nhg.lyapunov import sample_density_points
    sc = scenarios["mu-poly"]
    rep = verify_linear_density(sc, certificates("mu-poly"),
                                samples=sample_density_points(sc, 1000, seed=5))
    assert rep.passed and rep.samples == 1000


def test_integrability_edge_fails(linear_1d):
    cert = build_S(linear_1d).with_a(0.5)
    rep = verify_linear_density(linear_1d, cert)
    assert not rep.passed
    assert abs(rep.margins["min_value"]) < 1e-12


def test_integrability_limits(scenarios, certificates, linear_1d):
    # int_{|x|>1} x^-2 dx = 2 and int_{|x|>1} |x|^-4 dx = pi in the plane
    rep = linear_integrability(linear_1d, build_S(linear_1d).with_a(1.0), 0.0)
    assert rep.margins["limit"] == pytest.approx(2.0, rel=1e-10)
    sc = scenarios["uniform-2d"]
    rep2 = linear_integrability(sc, certificates("uniform-2d"), 0.0)
    assert rep2.margins["limit"] == pytest.approx(np.pi, rel=1e-9)


def test_divergence_detected_at_a_equal_half_n(linear_1d):
    cert = build_S(linear_1d).with_a(0.5)
    rep = linear_integrability(linear_1d, cert, 0.0)
    assert not rep.passed
    inc = shell_integrals(lambda x: np.abs(x[:, 0]) ** -1.0, 1, 1.0, 6)
    np.testing.assert_allclose(inc, 2 * np.log(2.0), rtol=1e-12)


def test_summary_extrapolates_geometric_tail():
    out = integrability_summary(0.5 ** np.arange(1, 9))
    assert out["converges"]
    assert out["limit"] == pytest.approx(1.0, rel=1e-12)


def test_certificate_json_roundtrip(certificates):
    cert = certificates("uniform-2d")
    again = LyapunovCertificate.from_json(cert.to_json())
    assert np.array_equal(again.S, cert.S)
    assert again.a == cert.a and again.C == cert.C
