import numpy as np
import pytest

from nhg.contraction import (
    check_domination,
    check_window_bound,
    compute_pq,
    contraction_report,
    domination_values,
    verify_contraction,
)
from nhg.scenario import BUILTIN_NAMES, load_scenario

# sup_t int_0^t (mu(s)/mu(t)) w(s) ds for lipschitz-decay, from scipy.integrate.quad
# on a 2001-point grid refined by a bounded scalar search
LIPSCHITZ_DECAY_P = 0.15255329941433957
LIPSCHITZ_DECAY_Q = 0.1078714725082613


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtins_satisfy_all_hypotheses(name, scenarios):
    rep = contraction_report(scenarios[name])
    assert rep.passed, rep.failed_hypotheses()
    assert rep.max_ratio <= 1 + 1e-6
    assert rep.q < 1


def test_pq_uniform_closed_form(scenarios):
    # p(t) = 0.1 t e^-t, largest at t = 1
    rep = compute_pq(scenarios["uniform-1d"])
    assert rep.margins["p"] == pytest.approx(0.1 / np.e, abs=1e-9)
    assert rep.margins["q"] == pytest.approx(0.1 / np.e, abs=1e-9)
    assert rep.margins["p_argmax_t"] == pytest.approx(1.0, abs=1e-4)


def test_pq_mu_poly_closed_form(scenarios):
    # p(t) = (1 - (1+t)^-2)/4, increasing, so the sup sits at T
    rep = compute_pq(scenarios["mu-poly"])
    assert rep.margins["p"] == pytest.approx(0.25 * (1 - 1 / 121), abs=1e-9)


def test_pq_generalized_exponential(scenarios):
    rep = compute_pq(scenarios["lipschitz-decay"])
    assert rep.margins["p"] == pytest.approx(LIPSCHITZ_DECAY_P, abs=1e-8)
    assert rep.margins["q"] == pytest.approx(LIPSCHITZ_DECAY_Q, abs=1e-8)


def test_pq_horizon_is_stated_and_bounded(scenarios):
    sc = scenarios["uniform-1d"]
    rep = compute_pq(sc, 5.0)
    assert any("[0, T]" in note for note in rep.notes)
    with pytest.raises(ValueError, match="exceeds"):
        compute_pq(sc, sc.T_max + 1)


def test_q_violation_message():
    sc = load_scenario({
        "name": "big-q", "dimension": 1, "A": [["-0.5"]], "f": ["sin(y_1)"], "beta": "1",
        "gamma": "1", "D": "1", "mu": "exp(t)", "mu_prime": "exp(t)", "alpha": 0.5, "r": 1,
        "T_max": 60.0,
    })
    rep = compute_pq(sc)
    assert not rep.passed
    assert "(P4) violated: q = 2.0 ≥ 1" in rep.notes


def test_misdeclared_rate_is_caught(scenarios):
    # true rate 1, declared 2: ratio e^(t-s) peaks at (10, 0)
    sc = scenarios["uniform-1d"].with_config(alpha=2.0)
    rep = verify_contraction(sc)
    assert not rep.passed
    assert rep.margins["max_ratio"] == pytest.approx(np.exp(10.0), rel=1e-7)
    assert (rep.margins["argmax_t"], rep.margins["argmax_s"]) == (10.0, 0.0)


def test_explicit_pairs(scenarios):
    sc = scenarios["mu-poly"]
    pairs = np.array([[2.0, 1.0], [9.0, 0.0], [3.0, 3.0]])
    rep = verify_contraction(sc, grid=pairs)
    assert rep.passed
    assert rep.margins["max_ratio"] == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        verify_contraction(sc, grid=np.array([[1.0, 2.0]]))


def test_window_constant_uniform(scenarios):
    # |X(t,s)| = e^-(t-s); the largest value over grid pairs t > s is one grid step
    rep = check_window_bound(scenarios["uniform-1d"])
    assert rep.margins["c"] == pytest.approx(np.exp(-0.25), rel=1e-8)
    with pytest.raises(ValueError):
        check_window_bound(scenarios["uniform-1d"], d=0.5)


def test_window_needs_no_grid_pair():
    sc = load_scenario({
        "name": "coarse", "dimension": 1, "A": [["-1"]], "f": ["0"], "beta": "0",
        "gamma": "0", "D": "1", "mu": "exp(t)", "alpha": 1.0, "r": 1, "T_max": 40.0,
    })
    rep = check_window_bound(sc, d=2.0)
    assert rep.margins["admissible_pairs"] == 0
    assert rep.margins["c"] == pytest.approx(0.5, rel=1e-8)


def test_domination_closed_form(scenarios):
    sc = scenarios["uniform-1d"]
    t = np.linspace(0, 10, 21)
    vals = domination_values(sc, t)
    np.testing.assert_allclose(vals, np.exp(-t + 0.1 * (1 - np.exp(-t))), rtol=1e-10)
    assert check_domination(sc).passed


def test_domination_fails_when_gamma_dominates():
    sc = load_scenario({
        "name": "weak", "dimension": 1, "A": [["-0.5"]], "f": ["sin(y_1)"], "beta": "1",
        "gamma": "1", "D": "1", "mu": "exp(t)", "alpha": 0.5, "r": 1, "T_max": 20.0,
    })
    assert not check_domination(sc).passed
