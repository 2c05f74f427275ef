import numpy as np
import pytest
from scipy.integrate import quad

from pairdrift.quadrature import ConeIntegral, OscMoment, gl_panels


def test_gl_panels_polynomial_exact():
    nodes, weights = gl_panels(np.array([0.0, 0.3, 1.0]), 8)
    val = float((weights * nodes ** 7).sum())
    assert val == pytest.approx(1.0 / 8.0, rel=1e-14)


def test_cone_integral_against_quad():
    ci = ConeIntegral(0.9, 2.0 / 3.0, 10.0)
    oracle, _ = quad(lambda t: (1 + t * t) ** ((0.9 - 2.0 / 3.0 - 1) / 2),
                     -10.0, 0.1, limit=400)
    assert ci.full == pytest.approx(oracle, rel=1e-12)
    for x in (-10.0, -3.7, -0.5, 0.0, 0.05, 0.1):
        want, _ = quad(lambda t: (1 + t * t) ** ((0.9 - 2.0 / 3.0 - 1) / 2),
                       x, 0.1, limit=400)
        got = float(ci.tail(np.array([x]))[0])
        assert got == pytest.approx(want, rel=1e-11, abs=1e-13)


def test_cone_integral_empty_range():
    ci = ConeIntegral(0.9, 0.4, 10.0)
    assert float(ci.tail(np.array([0.1]))[0]) == pytest.approx(0.0, abs=1e-15)


def test_cone_integral_rejects_outside():
    ci = ConeIntegral(0.9, 0.4, 10.0)
    with pytest.raises(ValueError):
        ci.tail(np.array([-11.0]))


@pytest.mark.parametrize("a,omega", [(0.25, 0.0), (0.25, 3.0), (0.7, 12.6),
                                     (0.5, 40.0), (2.5, 12.6)])
def test_cos_moment_against_quad(a, omega):
    table = OscMoment(a, max(omega, 1.0), "cos")
    got = float(table(np.array([omega]))[0])
    want, _ = quad(lambda t: t ** (a - 1) * np.exp(-t * t / 2)
                   * np.cos(omega * t), 0, 14.0, limit=2000)
    assert got == pytest.approx(want, rel=2e-9, abs=1e-12)


@pytest.mark.parametrize("a,omega", [(0.25, 1.0), (0.7, 12.6), (0.5, 40.0)])
def test_sin_moment_against_quad(a, omega):
    table = OscMoment(a, max(omega, 1.0), "sin")
    got = float(table(np.array([omega]))[0])
    want, _ = quad(lambda t: t ** a * np.exp(-t * t / 2)
                   * np.sin(omega * t), 0, 14.0, limit=2000)
    assert got == pytest.approx(want, rel=2e-9, abs=1e-12)


def test_frozen_interface_constant():
    """A2 for (h=0.5, p=1, q=0, alpha=0.9, C=10) against the quad oracle."""
    from pairdrift.model import ModelParams
    from pairdrift.lyapunov import make_lyapunov_params
    lp = make_lyapunov_params(ModelParams(h=0.5), C=10.0, p1=1.0, alpha1=0.9)
    assert lp.A2[0] == pytest.approx(1.0134797051177165, rel=1e-12)
    beta = lp.beta[0]
    c1 = beta / 20.0
    B2 = (c1 / 2.0) / (0.9 - beta)
    oracle, _ = quad(lambda t: (1 + t * t) ** ((0.9 - beta - 1) / 2),
                     -10.0, 0.1, limit=400)
    want = (1.01) ** 0.5 + c1 * 1.01 ** ((1 + beta) / 2) * oracle \
        - B2 * 10.0 ** (0.9 - beta)
    assert lp.A2[0] == pytest.approx(want, rel=1e-11)
