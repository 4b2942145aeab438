import numpy as np
import pytest

from finslerlab.connection import (MetricTensorField, berwald_bridge_check,
                                   berwald_h_derive, cartan_axiom_residuals,
                                   cartan_coefficients, frame, h_cov_derive,
                                   spray_and_nonlinear, v_cov_derive)
from finslerlab.errors import FinslerError
from finslerlab.fields import ConstantField, ExpressionField, PolynomialField
from finslerlab.metric import JetPoint

from conftest import corpus
from oracles import RiemannOracle


@pytest.fixture(scope="module")
def generic_oracle(riemann_generic3):
    return RiemannOracle(riemann_generic3)


def test_euclidean_connection_vanishes(euclid3):
    p = JetPoint([0.4, 0.9, 0.3], [0.6, -0.2, 0.7])
    cd = cartan_coefficients(euclid3, p)
    for arr in (cd.spray, cd.nconn, cd.cartan_h, cd.cartan_v, cd.berwald_h):
        assert np.max(np.abs(arr)) == 0.0


def test_riemannian_spray_and_nonlinear_match_christoffel(riemann_generic3,
                                                          generic_oracle):
    for p in corpus(riemann_generic3, 3, seed=1):
        gamma = generic_oracle.christoffel(p.x)
        spray, nconn = spray_and_nonlinear(riemann_generic3, p)
        assert spray == pytest.approx(
            0.5 * np.einsum("ijk,j,k->i", gamma, p.y, p.y), abs=1e-10)
        assert nconn == pytest.approx(
            np.einsum("ijk,k->ij", gamma, p.y), abs=1e-10)


def test_riemannian_cartan_coefficients_are_christoffel(riemann_generic3,
                                                        generic_oracle):
    p = corpus(riemann_generic3, 1, seed=2)[0]
    cd = cartan_coefficients(riemann_generic3, p)
    assert cd.cartan_h == pytest.approx(generic_oracle.christoffel(p.x),
                                        abs=1e-10)
    assert np.max(np.abs(cd.cartan_v)) < 1e-12
    assert cd.berwald_h == pytest.approx(cd.cartan_h, abs=1e-10)


def test_euler_identity_for_spray(randers3_twisted):
    for p in corpus(randers3_twisted, 3, seed=3):
        spray, nconn = spray_and_nonlinear(randers3_twisted, p)
        assert nconn @ p.y == pytest.approx(2.0 * spray, abs=1e-10)


def test_spray_homogeneity_by_scaling(randers3_twisted):
    p = corpus(randers3_twisted, 1, seed=4)[0]
    g1, n1 = spray_and_nonlinear(randers3_twisted, p)
    g2, n2 = spray_and_nonlinear(randers3_twisted, JetPoint(p.x, 2.0 * p.y))
    scale = max(1.0, np.max(np.abs(g1)))
    assert np.max(np.abs(g2 - 4.0 * g1)) / scale < 1e-8
    assert np.max(np.abs(n2 - 2.0 * n1)) / scale < 1e-8


@pytest.mark.parametrize("fixture", ["randers3", "randers3_twisted",
                                     "sphere3", "expression2"])
def test_cartan_axioms_hold(fixture, request):
    m = request.getfixturevalue(fixture)
    for p in corpus(m, 4, seed=5):
        res = cartan_axiom_residuals(m, p)
        for name, val in res.items():
            assert val < 1e-9, f"{name} residual {val} on {m.name}"


def test_connection_data_validation_catches_broken_symmetry(randers3):
    p = corpus(randers3, 1, seed=6)[0]
    cd = cartan_coefficients(randers3, p)
    broken = cd.cartan_h.copy()
    broken[0, 0, 1] += 0.05
    from finslerlab.connection import ConnectionData
    with pytest.raises(FinslerError):
        ConnectionData(cd.spray, cd.nconn, broken, cd.cartan_v,
                       cd.berwald_h, p)


def test_h_derivative_of_metric_vanishes(randers3_twisted, sphere3):
    for m in (randers3_twisted, sphere3):
        p = corpus(m, 1, seed=7)[0]
        hg = h_cov_derive(m, p, MetricTensorField("g"))
        assert np.max(np.abs(hg.components)) < 1e-9
        assert hg.index_signature == ("cov", "cov", "cov")


def test_v_derivative_of_metric_vanishes_cartan(randers3_twisted):
    p = corpus(randers3_twisted, 1, seed=8)[0]
    vg = v_cov_derive(randers3_twisted, p, MetricTensorField("g"))
    assert np.max(np.abs(vg.components)) < 1e-10


def test_h_derivative_of_constant_field_flat(euclid3):
    p = JetPoint([0.5, 0.5, 0.5], [0.7, 0.1, -0.4])
    out = h_cov_derive(euclid3, p, ConstantField([1.0, -2.0, 0.5]))
    assert np.max(np.abs(out.components)) == 0.0


def test_h_derivative_of_lagrangian_vanishes(randers3_twisted):
    p = corpus(randers3_twisted, 1, seed=9)[0]
    out = h_cov_derive(randers3_twisted, p, MetricTensorField("L"))
    assert np.max(np.abs(out.components)) < 1e-10


def test_vertical_derivative_of_eta_is_identity(randers3, sphere3):
    for m in (randers3, sphere3):
        p = corpus(m, 1, seed=10)[0]
        out = v_cov_derive(m, p, MetricTensorField("eta"))
        assert out.components == pytest.approx(np.eye(m.n), abs=1e-12)


def test_berwald_vertical_derivative_of_y_independent_field(randers3_twisted):
    p = corpus(randers3_twisted, 1, seed=11)[0]
    field = ExpressionField(["x1*x2", "sin(x3)", "x1 - x2"], 3)
    out = v_cov_derive(randers3_twisted, p, field, connection="berwald")
    assert np.max(np.abs(out.components)) < 1e-12
    cartan = v_cov_derive(randers3_twisted, p, field, connection="cartan")
    assert np.max(np.abs(cartan.components)) > 1e-4   # torsion correction


def test_berwald_h_derivative_kills_lagrangian(randers3_twisted):
    p = corpus(randers3_twisted, 1, seed=12)[0]
    out = berwald_h_derive(randers3_twisted, p, MetricTensorField("L"))
    assert np.max(np.abs(out.components)) < 1e-10


@pytest.mark.parametrize("fixture,tol", [
    ("euclid3", 1e-12),
    ("riemann_generic3", 1e-9),
    ("randers3_twisted", 1e-9),
])
def test_bridge_identities(fixture, tol, request):
    m = request.getfixturevalue(fixture)
    rng = np.random.default_rng(13)
    field = PolynomialField.random(m.n, rng, scale=0.7)
    for p in corpus(m, 3, seed=13):
        res = berwald_bridge_check(m, p, field)
        assert res["vertical"] < tol
        assert res["horizontal"] < tol


def test_frame_cached_per_point(randers3):
    p = corpus(randers3, 1, seed=14)[0]
    assert frame(randers3, p) is frame(randers3, p)
