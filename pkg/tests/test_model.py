import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from pairdrift.model import (AuxState, Chart, ModelParams, State,
                             diffusion_uvz, drift_aux, drift_eta, drift_uvz,
                             drift_xyz, to_uvz, to_xyz)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(gamma=-1.0)
    with pytest.raises(ValueError):
        ModelParams(h=1.0)
    with pytest.raises(ValueError):
        ModelParams(kappa1=0.0)
    with pytest.raises(ValueError):
        ModelParams(h=0.5, kappa1=1.0, kappa2=1.5, rough_physical=True)
    p = ModelParams.physical(h=0.25)
    assert p.kappa2 == pytest.approx(1.5, abs=0)


def test_alpha_h_always_derived():
    p = ModelParams(h=0.5)
    assert p.alpha_h == pytest.approx(1.0 / 3.0 + 1.0 / 3.0, abs=1e-15)
    assert ModelParams(h=0.1).alpha_h == pytest.approx(0.4, abs=1e-15)


def test_state_z_range():
    with pytest.raises(ValueError):
        State(Chart.XYZ, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        State(Chart.XYZ, 0.0, 0.0, 1.5)


def test_drift_xyz_values():
    p = ModelParams(gamma=1.0, h=0.5)
    assert_allclose(drift_xyz((0.0, 0.0, 0.5), p).ravel(), [0.0, 0.0, 0.0])
    assert_allclose(drift_xyz((1.0, 0.0, 1.0), p).ravel(), [-1.5, 0.0, 0.5])
    assert_allclose(drift_xyz((0.0, 1.0, 1.0), p).ravel(), [1.0, -1.0, 0.0])


def test_drift_uvz_values():
    p = ModelParams(gamma=1.0, h=0.5)
    assert_allclose(drift_uvz((0.0, 0.0, 1.0), p).ravel(), [0.0, 0.0, 0.0])
    s1, s2 = diffusion_uvz((0.0, 0.0, 1.0), p)
    assert s1 == pytest.approx(np.sqrt(2.0))
    assert s2 == pytest.approx(np.sqrt(2.0))
    assert_allclose(drift_uvz((1.0, 0.0, 1.0), p).ravel(), [-5.0 / 3.0, 0.0, 0.5])


def test_drift_aux_values():
    p = ModelParams(h=0.5)
    assert_allclose(drift_aux((0.0, 0.0, 1.0), p).ravel(), [0.0, 0.0, 0.0])
    assert_allclose(drift_aux((1.0, 1.0, 1.0), p).ravel(),
                    [1.0 / 3.0, -5.0 / 3.0, 0.5])


def test_drift_eta_values():
    assert drift_eta(0.0, ModelParams(h=0.3)) == 0.0
    assert drift_eta(1.0, ModelParams(h=0.5)) == pytest.approx(2.0)
    assert drift_eta(-2.0, ModelParams(h=0.1)) == pytest.approx(-3.2)


def test_transform_example():
    s = State(Chart.XYZ, 8.0, -8.0, 1.0 / 8.0)
    u = s.to_uvz()
    assert_allclose([u.c1, u.c2, u.c3], [16.0, -16.0, 0.125], rtol=1e-14)
    z = np.array([0.3, 0.9])
    zero = np.zeros(2)
    uu, vv, zz = to_uvz(zero, zero, z)
    assert_allclose(uu, 0.0)
    assert_allclose(zz, z)


@given(x=st.floats(-1e3, 1e3), y=st.floats(-1e3, 1e3),
       z=st.floats(1e-6, 1.0, exclude_min=False))
@settings(max_examples=300, deadline=None)
def test_transform_round_trip(x, y, z):
    s = State(Chart.XYZ, x, y, z)
    back = s.to_uvz().to_xyz()
    scale = 1.0 + abs(x) + abs(y)
    assert abs(back.c1 - x) <= 1e-13 * scale
    assert abs(back.c2 - y) <= 1e-13 * scale
    assert back.c3 == z


def test_round_trip_bulk():
    rng = np.random.default_rng(0)
    n = 10 ** 6
    x = rng.normal(0, 50, n)
    y = rng.normal(0, 50, n)
    z = rng.uniform(1e-6, 1.0, n)
    u, v, zz = to_uvz(x, y, z)
    xb, yb, zb = to_xyz(u, v, zz)
    scale = 1.0 + np.abs(x)
    assert np.max(np.abs(xb - x) / scale) < 1e-14
    assert np.max(np.abs(yb - y) / (1.0 + np.abs(y))) < 1e-14


def _fd_generator(f, drift, diff, pts, hrel=1e-5):
    """Apply b.grad f + a1 f_11 + a2 f_22 by central differences."""
    x, y, z = pts
    out = np.zeros_like(x)
    b = drift(pts)
    steps = [hrel * np.maximum(np.abs(c), 1.0) for c in (x, y, z)]
    coords = [x, y, z]
    for i in range(3):
        hi = steps[i]
        up = [c.copy() for c in coords]
        dn = [c.copy() for c in coords]
        up[i] = up[i] + hi
        dn[i] = dn[i] - hi
        out += b[i] * (f(*up) - f(*dn)) / (2.0 * hi)
    a1, a2 = diff(pts)
    f0 = f(*coords)
    for i, a in ((0, a1), (1, a2)):
        hi = steps[i] * 30.0
        up = [c.copy() for c in coords]
        dn = [c.copy() for c in coords]
        up[i] = up[i] + hi
        dn[i] = dn[i] - hi
        out += a * (f(*up) - 2.0 * f0 + f(*dn)) / hi ** 2
    return out


def test_generator_consistency_across_charts():
    """The pushforward of the xyz generator matches the uvz generator.

    For smooth test functions f: L_xyz [f o T](x) = L_uvz[f](T(x)) with
    T the chart map, validating the stochastic change of variables that
    produces the rescaled system (including its Ito correction).
    """
    p = ModelParams(gamma=1.3, h=0.35, kappa1=0.8, kappa2=1.1)

    def drift_x(pts):
        return drift_xyz(pts, p)

    def diff_x(pts):
        one = np.ones_like(pts[0])
        return p.kappa1 * one, p.kappa2 * one

    def drift_u(pts):
        return drift_uvz(pts, p)

    def diff_u(pts):
        z23 = pts[2] ** (2.0 / 3.0)
        return p.kappa1 / z23, p.kappa2 / z23

    tests = [
        lambda u, v, z: u * u + 2.0 * v * v + np.sin(z),
        lambda u, v, z: np.exp(-0.01 * (u * u + v * v)) * z,
        lambda u, v, z: u * v * z + v,
    ]
    rng = np.random.default_rng(5)
    x = rng.normal(0, 2, 80)
    y = rng.normal(0, 2, 80)
    z = rng.uniform(0.3, 0.95, 80)
    u, v, _ = to_uvz(x, y, z)
    for f in tests:
        def f_chart(xx, yy, zz):
            uu, vv, _ = to_uvz(xx, yy, zz)
            return f(uu, vv, zz)

        lhs = _fd_generator(f_chart, drift_x, diff_x, (x, y, z))
        rhs = _fd_generator(f, drift_u, diff_u, (u, v, z))
        scale = np.maximum(np.abs(lhs), 1.0)
        assert np.max(np.abs(lhs - rhs) / scale) < 1e-6


def test_aux_is_large_radius_limit_of_uvz():
    """At z = 1 the (u, v) drift of the chart matches the auxiliary drift
    up to the friction term, with relative gap decaying like 1/R."""
    p = ModelParams(gamma=1.0, h=0.3)
    rng = np.random.default_rng(11)
    th = rng.uniform(0, 2 * np.pi, 400)
    gaps = []
    for R in (1e2, 1e3, 1e4):
        u, v = R * np.cos(th), R * np.sin(th)
        duv = drift_uvz((u, v, np.ones_like(u)), p)[:2]
        daux = drift_aux((u, v, np.ones_like(u)), p)[:2]
        num = np.hypot(duv[0] - daux[0], duv[1] - daux[1])
        den = np.hypot(daux[0], daux[1])
        gaps.append(np.max(num / den))
    gaps = np.array(gaps)
    assert np.all(gaps[1:] / gaps[:-1] < 0.15)  # ~linear decay in 1/R
    assert gaps[0] < 50 * p.gamma / 1e2


def test_aux_state_eta():
    a = AuxState(U=-4.0, V=3.0, Z=2.0)
    assert a.eta == pytest.approx(6.0)
    with pytest.raises(ValueError):
        AuxState(U=0.0, V=0.0, Z=0.0)
