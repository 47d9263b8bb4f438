import math

import numpy as np
import pytest

from flowlab.coefficients import from_expressions, preset
from flowlab.integrators import SimulationConfig, simulate
from flowlab.lyapunov import (LyapunovSpec, exp_moment_check,
                              poly_moment_check, steered_problem,
                              steering_contraction_check,
                              supermartingale_test)

BM = preset("bm(1)")
OU = preset("ou(1)")


def gaussian_exp_moment(theta: float, x: float, t: float) -> float:
    """E exp{theta (1 + X^2)} for X ~ N(x, t); valid while 2 theta t < 1."""
    assert 2 * theta * t < 1
    return math.exp(theta) * math.exp(theta * x**2 / (1 - 2 * theta * t)) / math.sqrt(
        1 - 2 * theta * t)


def test_exp_moment_gaussian_closed_form():
    # bm(1), alpha=1, lambda=4 (= 2 alpha C_2 with C_2 = 2), x=0, t=0.5
    spec = LyapunovSpec(alpha=1.0, lam=4.0)
    assert spec.admissible_for(BM) is True
    cfg = SimulationConfig(dt=1e-3, horizon=0.5, n_paths=20000, seed=101)
    rep, = exp_moment_check(BM, cfg, 0.0, spec, [0.5])
    theta = math.exp(-4.0 * 0.5)
    oracle = gaussian_exp_moment(theta, 0.0, 0.5)
    assert abs(rep.estimate - oracle) <= 3 * rep.std_error + 1e-3
    assert rep.bound == math.exp(1.0)
    assert rep.verdict == "pass"


def test_exp_moment_t0_attains_bound_exactly():
    spec = LyapunovSpec(alpha=1.0, lam=4.0)
    cfg = SimulationConfig(dt=0.5, horizon=0.5, n_paths=100, seed=1)
    rep = exp_moment_check(BM, cfg, 1.5, spec, [0.0])[0]
    assert rep.estimate == rep.bound
    assert rep.std_error == 0.0
    assert rep.passed


def test_exp_moment_lambda_monotone_on_matched_seeds():
    cfg = SimulationConfig(dt=1e-2, horizon=1.0, n_paths=2000, seed=7)
    ens = simulate(BM, cfg, 0.5)
    est = []
    for lam in (4.0, 6.0, 10.0):
        rep = exp_moment_check(BM, cfg, 0.5, LyapunovSpec(1.0, lam), [1.0],
                               ensemble=ens)[0]
        est.append(rep.estimate)
    assert est[0] >= est[1] >= est[2]


def test_exp_moment_inadmissible_lambda_downgrades():
    spec = LyapunovSpec(alpha=1.0, lam=0.5)  # below 2 alpha C_2 = 4
    cfg = SimulationConfig(dt=1e-2, horizon=0.5, n_paths=500, seed=3)
    rep = exp_moment_check(BM, cfg, 0.0, spec, [0.5])[0]
    assert rep.verdict == "unverified-premise"


def test_poly_moment_ou_closed_form():
    # E(1 + X_t^2) at x=1, t=1: 1 + e^{-2} + (1 - e^{-2})/2
    cfg = SimulationConfig(dt=1e-3, horizon=1.0, n_paths=20000, seed=103)
    rep, = poly_moment_check(OU, cfg, 1.0, 1.0, 1.0, [1.0])
    oracle = 1.0 + math.exp(-2.0) + (1 - math.exp(-2.0)) / 2.0
    assert abs(rep.estimate - oracle) <= 3 * rep.std_error + 2e-3
    assert rep.bound == math.exp(1.0) * 2.0
    assert rep.verdict == "pass"


def test_poly_moment_bm():
    # E(1 + W_1^2) = 2 <= e * 1
    cfg = SimulationConfig(dt=1e-3, horizon=1.0, n_paths=20000, seed=105)
    rep, = poly_moment_check(BM, cfg, 0.0, 1.0, 1.0, [1.0])
    assert abs(rep.estimate - 2.0) <= 3 * rep.std_error + 2e-3
    assert rep.passed


def test_poly_moment_t0_equality():
    cfg = SimulationConfig(dt=0.25, horizon=0.5, n_paths=50, seed=1)
    rep = poly_moment_check(OU, cfg, 2.0, 2.0, 3.0, [0.0])[0]
    assert rep.estimate == rep.bound == 25.0


def test_supermartingale_bm():
    spec = LyapunovSpec(alpha=1.0, lam=4.0)
    cfg = SimulationConfig(dt=1e-3, horizon=0.5, n_paths=20000, seed=107)
    rep = supermartingale_test(BM, cfg, 0.0, spec, 10.0,
                               [0.0, 0.125, 0.25, 0.375, 0.5])
    assert rep.passed
    assert rep.estimates[0] == math.exp(1.0)


def test_supermartingale_deterministic_decay():
    # sigma = 0, b = 0: f(t, x) decreases strictly through e^{-lam t}
    frozen = from_expressions({"d": 1, "m": 1, "drift": ["0"], "diffusion": [["0"]]})
    spec = LyapunovSpec(alpha=1.0, lam=2.0)
    cfg = SimulationConfig(dt=1e-2, horizon=1.0, n_paths=3, seed=1)
    rep = supermartingale_test(frozen, cfg, 1.0, spec, 10.0, [0.0, 0.5, 1.0])
    assert rep.passed
    assert rep.estimates[0] > rep.estimates[1] > rep.estimates[2]
    assert all(se == 0.0 for se in rep.std_errors)


def test_supermartingale_ou():
    spec = LyapunovSpec(alpha=1.0, lam=4.0)
    cfg = SimulationConfig(dt=1e-3, horizon=1.0, n_paths=10000, seed=109)
    rep = supermartingale_test(OU, cfg, 0.5, spec, 10.0, [0.0, 0.25, 0.5, 1.0])
    assert rep.passed


def test_steered_problem_drift():
    st = steered_problem(OU, 3.0, [2.0])
    # drift = -3(x - 2) - x
    assert st.field.drift(0.0, 1.0) == pytest.approx(3.0 - 1.0)


def test_steering_deterministic_linear_case():
    # b = 0, sigma = 0: Y_t - y0 = e^{-mt}(x0 - y0) exactly; C0 ~ 1, C1 ~ 0
    frozen = from_expressions({"d": 1, "m": 1, "drift": ["0"], "diffusion": [["0"]]})
    cfg = SimulationConfig(dt=1e-3, horizon=1.0, n_paths=200, seed=1)
    rep = steering_contraction_check(frozen, cfg, 1.0, 0.0, [1.0, 4.0, 16.0])
    assert rep.passed
    assert rep.C0 <= 1.0 + 1e-6
    assert rep.C1 <= math.exp(-0.5) + 1e-6  # late-half max of e^{-2mt} at m=1


def test_steering_bm_closed_form_bound():
    # E|Y_t|^2 = e^{-2mt} + (1 - e^{-2mt})/(2m) <= e^{-mt} + 1/sqrt(m)
    cfg = SimulationConfig(dt=1e-3, horizon=1.0, n_paths=4000, seed=111)
    rep = steering_contraction_check(BM, cfg, 1.0, 0.0, [1.0, 10.0])
    assert rep.passed
    assert rep.sup_stable
