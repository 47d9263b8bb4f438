import numpy as np
import pytest

from flowlab.coefficients import (AuditUnavailableError, GrowthProfile,
                                  PresetNotFoundError, audit_coercivity,
                                  audit_ellipticity, audit_growth,
                                  audit_majorant_convexity,
                                  audit_monotonicity, default_audit_grid,
                                  from_expressions, preset, run_all_audits)

GRID_1D = default_audit_grid(1)


def test_example1_drift_value():
    # b(x) = (1 - x^5) 1_{x<0} - (1 + x^5) 1_{x>=0}; at x = 2: -(1 + 32)
    p = preset("example1(0.4)")
    assert p.field.drift(0, 2.0) == -33.0
    assert p.field.drift(0, -2.0) == 33.0
    assert p.field.drift(0, 0.0) == -1.0  # right-closed branch at 0


def test_bm_identity_diffusion():
    p = preset("bm(3)")
    sig = p.field.diffusion(0.7, [1.0, -2.0, 0.5])
    assert sig.shape == (3, 3)
    assert np.array_equal(sig, np.eye(3))


def test_ou_linear_drift():
    assert preset("ou(1)").field.drift(0, 1.5) == -1.5


def test_unknown_preset():
    with pytest.raises(PresetNotFoundError):
        preset("heat-bath(7)")


def test_example1_beta_out_of_range():
    with pytest.raises(PresetNotFoundError):
        preset("example1(1.0)")


def test_batch_shapes():
    p = preset("bm(2)")
    x = np.zeros((5, 2))
    assert p.field.drift_batch(0.0, x).shape == (5, 2)
    assert p.field.diffusion_batch(0.0, x).shape == (5, 2, 2)


def test_coercivity_examples():
    # bm(1), kappa=1: LHS = (1+x^2) - C_1 (1+x^2) with C_1 = 1, identically 0
    rep = audit_coercivity(preset("bm(1)"), 1.0, GRID_1D)
    assert rep.passed
    assert abs(rep.worst_value) <= 1e-12
    # ou(1): worst value is -x^2 <= 0
    rep = audit_coercivity(preset("ou(1)"), 1.0, GRID_1D)
    assert rep.passed
    # example1(0.4) on [-5, 5]
    rep = audit_coercivity(preset("example1(0.4)"), 1.0, np.linspace(-5, 5, 501))
    assert rep.passed


def test_coercivity_constant_matches_radial_max():
    # closed forms: C_kappa = kappa * d for bm and ou
    assert preset("bm(3)").growth.coercivity_constant(2.0) == 6.0
    assert preset("ou(2)").growth.coercivity_constant(0.5) == 1.0
    # example1: the profile max sits at x = 0 for kappa = 1 (value 1)
    assert np.isclose(preset("example1(0.4)").growth.coercivity_constant(1.0), 1.0)


def test_monotonicity_examples():
    pts = np.linspace(-4, 4, 41)
    pairs = np.stack([pts[:-1], pts[1:]], axis=1)
    rep = audit_monotonicity(preset("example1(0.4)"), 1.0, pairs)
    assert rep.passed
    rep = audit_monotonicity(preset("bm(1)"), 1.0, pairs)
    assert rep.passed
    assert rep.worst_value <= 0.0


def test_monotonicity_kappa_zero_pure_drift():
    # with kappa = 0 the majorant vanishes and monotone-decreasing drifts
    # pass exactly
    pts = np.linspace(-3, 3, 31)
    pairs = np.stack([pts[:-1], pts[1:]], axis=1)
    for name in ("ou(1)", "example1(0.4)"):
        rep = audit_monotonicity(preset(name), 0.0, pairs)
        assert rep.passed
        assert rep.detail["pair_margin"] <= 1e-12


def test_monotonicity_coincident_pair_skipped():
    pairs = np.array([[[1.0], [1.0]], [[0.0], [1.0]]])
    with pytest.warns(UserWarning):
        rep = audit_monotonicity(preset("bm(1)"), 1.0, pairs)
    assert rep.passed


def test_majorant_convexity_midpoint():
    pts = np.linspace(-4, 4, 21)
    pairs = np.stack([pts[:-1], pts[1:]], axis=1)
    rep = audit_majorant_convexity(preset("example1(0.8)"), 1.0, pairs)
    assert rep.passed


def test_ellipticity_examples():
    assert audit_ellipticity(preset("example1(0.4)"), GRID_1D).passed
    assert audit_ellipticity(preset("bm(2)"), default_audit_grid(2)).passed


def test_ellipticity_failing_field():
    # sigma = (1+x^2)^{-2} with gamma1 = 1, C1 = 1 fails at large |x|
    bad = from_expressions({
        "d": 1, "m": 1,
        "drift": ["0"],
        "diffusion": [["pow(1 + x1*x1, -2)"]],
    })
    profile = GrowthProfile(
        alpha=0.0, alpha_prime=0.0, gamma1=1.0, gamma2=1.0, gamma3=1.0,
        C1=1.0, C2=2.0, C3=1.0, R0=1.0,
        coercivity_constant=lambda k: k,
        monotonicity_majorant=lambda k: (lambda t, x: np.zeros(x.shape[0])))
    import dataclasses
    bad = dataclasses.replace(bad, growth=profile)
    rep = audit_ellipticity(bad, np.linspace(-10, 10, 201))
    assert not rep.passed
    assert rep.worst_value > 0.0


def test_growth_examples():
    rep = audit_growth(preset("example1(0.4)"), np.linspace(-3, 3, 301))
    assert rep.passed
    rep = audit_growth(preset("bm(1)"), GRID_1D)
    assert rep.passed
    rep = audit_growth(preset("ou(1)"), GRID_1D)
    assert rep.passed


def test_all_preset_audits_pass_on_default_grid():
    for name in ("example1(0.4)", "example1(0.8)", "bm(1)", "bm(3)", "ou(1)",
                 "ou(2)", "degenerate-example1(1.0)"):
        for rep in run_all_audits(preset(name)):
            assert rep.passed, f"{name}: {rep.quantity_name} failed ({rep.worst_value})"


def test_audits_deterministic():
    p = preset("example1(0.4)")
    a = audit_coercivity(p, 1.0, GRID_1D)
    b = audit_coercivity(p, 1.0, GRID_1D)
    assert a == b


def test_step_drift_has_no_growth_metadata():
    p = preset("step-drift-1d")
    assert p.growth is None
    with pytest.raises(AuditUnavailableError):
        audit_coercivity(p, 1.0, GRID_1D)


def test_step_drift_support():
    p = preset("step-drift-1d")
    assert p.field.drift(0, 1.0) == -1.0
    assert p.field.drift(0, -1.5) == 1.0
    assert p.field.drift(0, 2.5) == 0.0


def test_degenerate_preset_alpha_zero():
    p = preset("degenerate-example1(1.0)")
    assert p.growth.alpha == 0.0
    assert np.isclose(p.field.diffusion(0, 2.0)[0, 0], 0.2)


def test_expression_problem_round_trip():
    p = from_expressions({
        "d": 2, "m": 1,
        "drift": ["-x1", "-x2 + t"],
        "diffusion": [["1"], ["indicator(2)"]],
    })
    b = p.field.drift_batch(0.5, np.array([[1.0, 2.0]]))
    assert np.allclose(b, [[-1.0, -1.5]])
    sig = p.field.diffusion_batch(0.0, np.array([[3.0, 3.0]]))
    assert sig[0, 1, 0] == 0.0
