import math

import numpy as np
import pytest

from flowlab.coefficients import preset
from flowlab.integrators import (SimulationConfig, coupled_simulate,
                                 simulate_bundle, start_difference)
from flowlab.flow_regularity import (fd_gradient, lipschitz_witness_check,
                                     maximal_function, quotient_norm,
                                     witness_fit)

BM = preset("bm(1)")
BM2 = preset("bm(2)")
OU = preset("ou(1)")
EX1 = preset("example1(0.4)")


def test_quotient_bm_exact():
    cfg = SimulationConfig(dt=1e-2, horizon=1.0, n_paths=100, seed=5)
    ens = coupled_simulate(BM2, cfg, [((1.0, 0.0), (0.5, 0.5))])
    qn = quotient_norm(ens, ((1.0, 0.0), (0.5, 0.5)), 4.0, math.inf)
    assert qn.value == np.sqrt(0.5)
    assert qn.std_error == 0.0


def test_quotient_zero_for_coincident_pair():
    cfg = SimulationConfig(dt=1e-2, horizon=0.5, n_paths=50, seed=5)
    ens = coupled_simulate(OU, cfg, [(1.0, 1.0)])
    qn = quotient_norm(ens, (1.0, 1.0), 2.0, math.inf)
    assert qn.value == 0.0


def test_quotient_symmetry():
    cfg = SimulationConfig(dt=1e-2, horizon=0.5, n_paths=50, seed=5)
    ens = simulate_bundle(EX1, cfg, [[0.5], [0.4]], share_noise=True,
                          kind="synchronous")
    a = quotient_norm(ens, (0.5, 0.4), 2.0, 2.0)
    b = quotient_norm(ens, (0.4, 0.5), 2.0, 2.0)
    assert a.value == b.value


def test_quotient_ou_l2_closed_form():
    # Z_t = e^{-t}; ||Z||_{L^2([0,1])} = sqrt((1 - e^{-2})/2)
    cfg = SimulationConfig(scheme="euler-maruyama", dt=1e-3, horizon=1.0,
                           n_paths=64, seed=7)
    ens = coupled_simulate(OU, cfg, [(1.0, 0.0)])
    qn = quotient_norm(ens, (1.0, 0.0), 2.0, 2.0)
    oracle = math.sqrt((1 - math.exp(-2.0)) / 2.0)
    assert abs(qn.value - oracle) < 2e-3  # quadrature + scheme O(dt)
    assert qn.std_error < 1e-15


def test_quotient_example1_dt_stability():
    vals = []
    for dt in (1e-2, 1e-3):
        cfg = SimulationConfig(dt=dt, horizon=1.0, n_paths=2000, seed=9)
        ens = coupled_simulate(EX1, cfg, [(0.5, 0.4)])
        vals.append(quotient_norm(ens, (0.5, 0.4), 4.0, math.inf).value)
    assert abs(vals[0] - vals[1]) / vals[1] < 0.05


def test_witness_bm_exact_half():
    cfg = SimulationConfig(dt=1e-2, horizon=1.0, n_paths=200, seed=11)
    w = witness_fit(BM, cfg, [-2.0, -1.0, 0.0, 1.0, 2.0], 2.0, math.inf)
    assert np.all(w.g == 0.5)
    assert w.envelope_pass


def test_witness_ou_half():
    cfg = SimulationConfig(dt=1e-3, horizon=1.0, n_paths=500, seed=13)
    w = witness_fit(OU, cfg, [-2.0, -1.0, 0.0, 1.0, 2.0], 2.0, math.inf)
    assert np.max(np.abs(w.g - 0.5)) < 1e-6
    assert w.envelope_pass


def test_witness_consistency_under_path_doubling():
    grid = [-1.0, 0.0, 1.0]
    w1 = witness_fit(EX1, SimulationConfig(dt=1e-2, horizon=0.5, n_paths=2000,
                                           seed=15), grid, 2.0, math.inf)
    w2 = witness_fit(EX1, SimulationConfig(dt=1e-2, horizon=0.5, n_paths=4000,
                                           seed=16), grid, 2.0, math.inf)
    pooled = np.sqrt(w1.g_std_error**2 + w2.g_std_error**2)
    assert np.all(np.abs(w1.g - w2.g) <= 3 * pooled + 1e-9)


def test_fd_gradient_bm_identity():
    cfg = SimulationConfig(dt=1e-2, horizon=1.0, n_paths=50, seed=17)
    est1, _ = fd_gradient(BM, cfg, 0.0, 1e-3, 2.0, check_step=False)
    assert est1.value == 1.0  # |I_1|^2 exactly
    est, rep = fd_gradient(BM2, cfg, (0.0, 0.0), 1e-3, 2.0, check_step=False)
    assert est.value == pytest.approx(2.0, rel=1e-15)  # |I_2|_F^2 up to sqrt ulp
    assert np.array_equal(est.mean_matrix[0], np.eye(2))
    assert np.array_equal(est.mean_matrix[-1], np.eye(2))


def test_fd_gradient_ou_exponential():
    cfg = SimulationConfig(scheme="euler-maruyama", dt=1e-3, horizon=1.0,
                           n_paths=50, seed=19)
    est, rep = fd_gradient(OU, cfg, 0.5, 1e-3, 2.0,
                           variant="expectation-of-sup", check_step=False)
    assert abs(est.value - 1.0) < 1e-10  # sup at t = 0
    est2, _ = fd_gradient(OU, cfg, 0.5, 1e-3, 2.0, check_step=False)
    assert abs(est2.value - 1.0) < 1e-10
    # terminal slope matches e^{-1} to O(dt)
    assert abs(est.mean_matrix[-1][0, 0] - math.exp(-1.0)) < 1e-3


def test_fd_gradient_matches_quotient_for_linear_flow():
    # for ou the central difference equals the coupled difference / (2h)
    h = 1e-3
    cfg = SimulationConfig(scheme="euler-maruyama", dt=1e-2, horizon=0.5,
                           n_paths=20, seed=21)
    ens = simulate_bundle(OU, cfg, [[0.5 + h], [0.5 - h]], share_noise=True)
    z = start_difference(ens, 0, 1)[:, :, 0]
    est, _ = fd_gradient(OU, cfg, 0.5, h, 2.0, check_step=False)
    grad_from_pair = z / (2 * h)
    assert np.max(np.abs(grad_from_pair.mean(axis=0)
                         - est.mean_matrix[:, 0, 0])) < 1e-12


# ---------------------------------------------------------------------------
# maximal function


def test_maximal_constant():
    out = maximal_function(np.full(9, 3.0), 1.0, 2.0)
    assert np.all(out == 3.0)


def test_maximal_single_spike():
    g = np.zeros(11)
    g[5] = 1.0
    M = maximal_function(g, 1.0, 2.0)
    assert M[5] == 1.0                 # radius-0 window is the node itself
    assert M[4] == pytest.approx(1/3)  # best window: 3 nodes containing spike
    assert M[3] == pytest.approx(1/5)


def test_maximal_monotone_in_radius():
    rng = np.random.default_rng(0)
    g = rng.uniform(size=31)
    m1 = maximal_function(g, 1.0, 2.0)
    m2 = maximal_function(g, 1.0, 5.0)
    assert np.all(m2 >= m1 - 1e-15)


def test_maximal_2d_constant():
    out = maximal_function(np.full((7, 7), 2.5), 1.0, 2.0)
    assert np.allclose(out, 2.5)


def test_lipschitz_abs_on_lattice():
    xs = np.linspace(-1.0, 1.0, 201)
    rep = lipschitz_witness_check(np.abs(xs), np.abs(np.sign(xs)),
                                  xs[1] - xs[0], 0.5)
    assert rep.passed
    assert rep.n_violations == 0


def test_lipschitz_clipped_square_on_lattice():
    xs = np.linspace(-1.0, 1.0, 201)
    f = np.minimum(xs**2, 0.25)
    grad = np.abs(2.0 * xs) * (xs**2 < 0.25)
    rep = lipschitz_witness_check(f, grad, xs[1] - xs[0], 0.5)
    assert rep.passed
    assert rep.n_violations == 0
