import numpy as np
import pytest

from finslerlab.concircular import (CandidateField, consequence_battery,
                                    fit_and_verify)
from finslerlab.errors import FinslerError
from finslerlab.metric import JetPoint

from conftest import HYPER_PSI, SPHERE_PSI, corpus

FLAT_ZERO = ["0", "0", "0"]


@pytest.fixture(scope="module")
def inward():
    return CandidateField("inward", ["-x1", "-x2", "-x3"], 3,
                          y_independent=True, psi="-1", alpha=FLAT_ZERO)


@pytest.fixture(scope="module")
def outward():
    return CandidateField("outward", ["x1", "x2", "x3"], 3,
                          y_independent=True, psi="1", alpha=FLAT_ZERO)


def test_flat_inward_field_is_concurrent(euclid3, inward):
    rep = fit_and_verify(euclid3, inward, corpus(euclid3, 6, seed=1))
    assert rep.concircular and rep.concurrent
    assert rep.residual_h < 1e-9 and rep.residual_v < 1e-9
    for pf in rep.points:
        assert pf.psi_hat == pytest.approx(-1.0, abs=1e-8)
        assert np.max(np.abs(pf.alpha_hat)) < 1e-8


def test_flat_outward_field_concircular_not_concurrent(euclid3, outward):
    rep = fit_and_verify(euclid3, outward, corpus(euclid3, 6, seed=1))
    assert rep.concircular and not rep.concurrent
    assert rep.points[0].psi_hat == pytest.approx(1.0, abs=1e-8)


def test_constant_field_not_concircular(euclid3):
    cand = CandidateField("const", ["0.7", "-0.1", "0.4"], 3,
                          y_independent=True)
    rep = fit_and_verify(euclid3, cand, corpus(euclid3, 6, seed=1))
    assert not rep.concircular
    assert rep.residual_h < 1e-12          # the fit is exact, psi is just zero
    assert all(abs(pf.psi_hat) < 1e-12 for pf in rep.points)
    assert rep.psi_min_ok is False


def test_fit_recovers_nonzero_alpha_exactly(euclid3):
    # zeta^i = exp(c x1) (x^i + d delta^i_1) solves the horizontal condition
    # with alpha = (c, 0, 0) and psi = exp(c x1)
    c, d = 0.3, 1.0
    cand = CandidateField(
        "exp_weighted",
        [f"exp({c}*x1)*(x1 + {d})", f"exp({c}*x1)*x2", f"exp({c}*x1)*x3"],
        3, y_independent=True, psi=f"exp({c}*x1)", alpha=[str(c), "0", "0"])
    rep = fit_and_verify(euclid3, cand, corpus(euclid3, 6, seed=2))
    assert rep.concircular and not rep.concurrent
    assert rep.residual_h < 1e-10
    for pf in rep.points:
        assert pf.psi_hat == pytest.approx(np.exp(c * pf.point.x[0]), rel=1e-10)
        assert pf.alpha_hat == pytest.approx([c, 0.0, 0.0], abs=1e-10)


def test_sphere_gradient_field(sphere3):
    cand = CandidateField("sphere_gradient", ["-x1", "-x2", "-x3"], 3,
                          y_independent=True, psi=SPHERE_PSI, alpha=FLAT_ZERO)
    rep = fit_and_verify(sphere3, cand, corpus(sphere3, 6, seed=3))
    assert rep.concircular and not rep.concurrent
    assert rep.residual_h < 1e-10
    for pf in rep.points:
        r2 = float(pf.point.x @ pf.point.x)
        assert pf.psi_hat == pytest.approx((r2 - 1) / (1 + r2), rel=1e-9)
        assert pf.data.mu_method == "exact"
        assert abs(pf.data.b_scalar) > 1e-3
        assert abs(pf.data.hbar_zz) > 1e-4


def test_hyperbolic_gradient_field(hyperbolic3):
    cand = CandidateField("hyper_gradient", ["x1", "x2", "x3"], 3,
                          y_independent=True, psi=HYPER_PSI, alpha=FLAT_ZERO)
    rep = fit_and_verify(hyperbolic3, cand, corpus(hyperbolic3, 6, seed=4))
    assert rep.concircular
    assert all(pf.psi_hat >= 1.0 for pf in rep.points)


def test_derived_data_orthogonality(sphere3):
    cand = CandidateField("sphere_gradient", ["-x1", "-x2", "-x3"], 3,
                          y_independent=True, psi=SPHERE_PSI, alpha=FLAT_ZERO)
    rep = fit_and_verify(sphere3, cand, corpus(sphere3, 5, seed=5))
    from finslerlab.connection import frame
    for pf in rep.points:
        g = frame(sphere3, pf.point).g0
        m = pf.data.m_field
        assert abs(float(m @ g @ pf.point.y)) < 1e-10          # m orthogonal to eta
        assert float(m @ g @ pf.zeta) == pytest.approx(
            float(m @ g @ m), abs=1e-10)                        # g(m,zeta)=g(m,m)
        assert pf.data.omega == pytest.approx(g @ pf.zeta, abs=1e-12)
        # with alpha = 0 the ratio identity mu = lambda omega holds pointwise
        if pf.data.lambda_ratio is not None:
            assert pf.data.mu_form == pytest.approx(
                pf.data.lambda_ratio * pf.data.omega, abs=1e-8)


def test_randers_radial_field_rejected(randers3_twisted):
    cand = CandidateField("inward", ["-x1", "-x2", "-x3"], 3,
                          y_independent=True)
    rep = fit_and_verify(randers3_twisted, cand,
                         corpus(randers3_twisted, 5, seed=6))
    assert not rep.concircular
    assert rep.residual_h > 1e-3


def test_zero_field_reports_indeterminate(euclid3):
    cand = CandidateField("null", ["0", "0", "0"], 3, y_independent=True)
    rep = fit_and_verify(euclid3, cand, corpus(euclid3, 4, seed=7))
    assert rep.indeterminate
    assert not rep.concircular


def test_berwald_side_agrees(euclid3, sphere3, inward):
    rep = fit_and_verify(euclid3, inward, corpus(euclid3, 5, seed=8))
    assert rep.berwald["agrees"]
    assert rep.berwald["max_psi_diff"] < 1e-10
    cand = CandidateField("sphere_gradient", ["-x1", "-x2", "-x3"], 3,
                          y_independent=True, psi=SPHERE_PSI, alpha=FLAT_ZERO)
    rep2 = fit_and_verify(sphere3, cand, corpus(sphere3, 5, seed=8))
    assert rep2.berwald["agrees"]
    assert rep2.berwald["concircular"]


def test_battery_requires_verified_candidate(randers3_twisted):
    cand = CandidateField("inward", ["-x1", "-x2", "-x3"], 3)
    pts = corpus(randers3_twisted, 3, seed=9)
    with pytest.raises(FinslerError, match="not a verified"):
        consequence_battery(randers3_twisted, cand, pts)


def test_battery_flat_concurrent_all_zero(euclid3, inward):
    pts = corpus(euclid3, 5, seed=10)
    rep = fit_and_verify(euclid3, inward, pts)
    bat = consequence_battery(euclid3, inward, pts, fit_report=rep)
    assert bat.passed
    for name, item in bat.items.items():
        assert item["residual"] < 1e-9, name
    # concurrent specialization items are present
    assert "concurrent_hv_curvature_is_torsion" in bat.items
    assert "concurrent_h_curvature_kills_field" in bat.items


def test_battery_sphere_nontrivial_curvature(sphere3):
    cand = CandidateField("sphere_gradient", ["-x1", "-x2", "-x3"], 3,
                          y_independent=True, psi=SPHERE_PSI, alpha=FLAT_ZERO)
    pts = corpus(sphere3, 5, seed=11)
    rep = fit_and_verify(sphere3, cand, pts)
    bat = consequence_battery(sphere3, cand, pts, fit_report=rep)
    assert bat.passed
    # the curved identities are exercised against nonzero curvature
    assert bat.residual("h_curvature_on_field") < 1e-10
    assert bat.residual("h_curvature_lowered_on_field") < 1e-10
    assert bat.residual("h_deriv_h_curvature_expansion") < 1e-6
    assert bat.residual("h_deriv_h_curvature_along_field") < 1e-6
    assert not bat.mu_estimated


def test_battery_directional_independence_items(euclid3):
    cand = CandidateField("ydep", ["-x1 + 0.001*y2", "-x2", "-x3"], 3)
    pts = corpus(euclid3, 4, seed=12)
    rep = fit_and_verify(euclid3, cand, pts)
    # the vertical condition fails, so the candidate is rejected...
    assert not rep.concircular
    # ...and the battery (forced) reports the y-dependence
    bat = consequence_battery(euclid3, cand, pts, fit_report=rep,
                              require_verified=False)
    assert bat.items["field_y_independent"]["residual"] > 1e-4


def test_battery_detects_perturbed_field(randers3_twisted):
    # a perturbed candidate on a metric with real torsion must light up
    # the algebraic contraction items
    rng = np.random.default_rng(0)
    pts = corpus(randers3_twisted, 3, seed=13)
    comps = ["-x1 + 0.001*x2", "-x2 - 0.001*x3", "-x3 + 0.001*x1"]
    cand = CandidateField("perturbed", comps, 3, y_independent=True)
    rep = fit_and_verify(randers3_twisted, cand, pts)
    bat = consequence_battery(randers3_twisted, cand, pts, fit_report=rep,
                              require_verified=False)
    assert bat.items["torsion_kills_field"]["residual"] > 1e-4


def test_mu_finite_difference_fallback(sphere3):
    # no closed form for psi: mu comes from horizontal FD of the fit and is
    # flagged as estimated
    cand = CandidateField("sphere_gradient_nf", ["-x1", "-x2", "-x3"], 3,
                          y_independent=True)
    pts = corpus(sphere3, 3, seed=14)
    rep = fit_and_verify(sphere3, cand, pts)
    assert rep.concircular
    for pf in rep.points:
        assert pf.data.mu_method == "fd"
    bat = consequence_battery(sphere3, cand, pts, fit_report=rep)
    assert bat.mu_estimated
    # exact closed form for comparison
    exact = CandidateField("sphere_gradient", ["-x1", "-x2", "-x3"], 3,
                           y_independent=True, psi=SPHERE_PSI,
                           alpha=FLAT_ZERO)
    rep2 = fit_and_verify(sphere3, exact, pts)
    for pf, pf2 in zip(rep.points, rep2.points):
        assert pf.data.mu_form == pytest.approx(pf2.data.mu_form, abs=1e-6)
