import numpy as np
import pytest

from finslerlab.metric import MetricModel, sample_points

R2_3 = "x1^2 + x2^2 + x3^2"

SPHERE_PSI = f"({R2_3} - 1)/(1 + {R2_3})"
HYPER_PSI = f"(1 + {R2_3})/(1 - ({R2_3}))"


def corpus(m, count, seed=0):
    return sample_points(m, count, np.random.default_rng(seed))


@pytest.fixture(scope="session")
def euclid2():
    return MetricModel.euclidean(2, name="euclid2")


@pytest.fixture(scope="session")
def euclid3():
    return MetricModel.euclidean(3, name="euclid3")


@pytest.fixture(scope="session")
def sphere3():
    return MetricModel.riemannian(
        3, {"conformal": f"4/(1 + {R2_3})^2"}, name="sphere3",
        x_box=(0.15, 0.45))


@pytest.fixture(scope="session")
def hyperbolic3():
    return MetricModel.riemannian(
        3, {"conformal": f"4/(1 - ({R2_3}))^2"}, name="hyperbolic3",
        x_box=(0.15, 0.38))


@pytest.fixture(scope="session")
def riemann_generic3():
    # non-flat, non-constant-curvature, diagonally dominant on the box
    a = [["1 + x2^2", "0.1*x1*x2", "0"],
         ["0.1*x1*x2", "1 + x3^2", "0.05*x2"],
         ["0", "0.05*x2", "1 + x1^2"]]
    return MetricModel.riemannian(3, a, name="riemann_generic3",
                                  x_box=(0.3, 1.2))


@pytest.fixture(scope="session")
def randers3():
    return MetricModel.randers(3, "identity", ["0.3", "0", "0"],
                               name="randers3", x_box=(0.3, 1.2))


@pytest.fixture(scope="session")
def randers3_twisted():
    return MetricModel.randers(
        3, "identity",
        ["0.25 + 0.1*sin(x2)", "0.15*cos(x3)", "0.1*x1"],
        name="randers3_twisted", x_box=(0.3, 1.2))


@pytest.fixture(scope="session")
def randers2():
    return MetricModel.randers(2, "identity", ["0.3", "0"], name="randers2",
                               x_box=(0.3, 1.2))


@pytest.fixture(scope="session")
def expression2():
    # Randers-type norm written out as a raw expression in x and y
    return MetricModel.from_expression(
        2, "sqrt((1 + x1^2)*y1^2 + y2^2) + 0.2*y2", name="expression2",
        x_box=(0.3, 1.0))
