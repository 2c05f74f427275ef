"""Differential operators of the model and two ways to apply them.

Every operator used by the drift and boundary estimates is a first-order
field plus a diagonal second-order part,

    (O f)(p) = b1*f_1 + b2*f_2 + b3*f_3 + a1*f_11 + a2*f_22,

in one of three coordinate triples: (x, y, z), (u, v, z), or (u, eta, z).
No operator contains cross or z-second derivatives, so a function only needs
the bundle (f, f1, f2, f3, f11, f22) to be pushed through any of them.

Two backends are provided and must agree:

* closed form, via the :class:`D2` algebra (products, powers, chain rule)
  used by the Lyapunov module to assemble exact derivatives;
* central finite differences with per-point step tuning, for arbitrary
  scalar fields.

Registry (coordinates in parentheses):

    L_xyz, Q_xyz     generator / boundary operator of the reflected system (x,y,z)
    L_uvz, Q_uvz     the same in the rescaled chart (u,v,z)
    M                z^(2/3) * L_uvz with the z factor absorbed (u,v,z)
    N                boundary-free small-z limit of M (u,v,z)
    A                (U,V) generator of the auxiliary system (u,v,z; no z terms)
    T1               transport dominant balance on the outward cone (u,v,z)
    T2               transport dominant balance near the negative u-axis (u,v,z)
    T3_tilde         channel operator in (u, eta, z)
"""

from __future__ import annotations

import math

import numpy as np

from .model import ModelParams

__all__ = ["D2", "OPERATORS", "InterfacePointError",
           "apply_closed", "apply_fd", "operator_coeffs",
           "d2_const", "d2_coord", "d2_pow_r", "d2_pow_z", "d2_pow_absu",
           "d2_pow_absv", "d2_log_z", "d2_chain", "smoothstep"]

_EPS = np.finfo(float).eps


class InterfacePointError(ValueError):
    """Finite-difference stencil straddles a region interface."""


class D2:
    """Value plus the derivative slots (f1, f2, f3, f11, f22) as arrays."""

    __slots__ = ("f", "f1", "f2", "f3", "f11", "f22")

    def __init__(self, f, f1, f2, f3, f11, f22):
        self.f, self.f1, self.f2, self.f3 = f, f1, f2, f3
        self.f11, self.f22 = f11, f22

    def __add__(self, other):
        if isinstance(other, D2):
            return D2(self.f + other.f, self.f1 + other.f1, self.f2 + other.f2,
                      self.f3 + other.f3, self.f11 + other.f11, self.f22 + other.f22)
        return D2(self.f + other, self.f1, self.f2, self.f3, self.f11, self.f22)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __mul__(self, other):
        if isinstance(other, D2):
            return D2(
                self.f * other.f,
                self.f1 * other.f + self.f * other.f1,
                self.f2 * other.f + self.f * other.f2,
                self.f3 * other.f + self.f * other.f3,
                self.f11 * other.f + 2.0 * self.f1 * other.f1 + self.f * other.f11,
                self.f22 * other.f + 2.0 * self.f2 * other.f2 + self.f * other.f22,
            )
        return D2(self.f * other, self.f1 * other, self.f2 * other,
                  self.f3 * other, self.f11 * other, self.f22 * other)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self


def _zeros_like(u):
    return np.zeros(np.shape(u), dtype=float)


def d2_const(c, shape_src) -> D2:
    z = _zeros_like(shape_src)
    return D2(np.full(np.shape(shape_src), float(c)), z, z, z, z, z)


def d2_coord(u, v, z, which: int) -> D2:
    zz = _zeros_like(u)
    one = np.ones(np.shape(u), dtype=float)
    vals = [np.asarray(u, float), np.asarray(v, float), np.asarray(z, float)]
    grads = [zz, zz, zz]
    grads[which] = one
    return D2(vals[which], grads[0], grads[1], grads[2], zz, zz)


def d2_pow_r(u, v, p: float) -> D2:
    """r^p with r = sqrt(c1^2 + c2^2)."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    r2 = u * u + v * v
    z = _zeros_like(u)
    if p == 2.0:  # plain polynomial; the generic path is 0*inf at r = 0
        two = np.full(np.shape(u), 2.0)
        return D2(r2, 2.0 * u, 2.0 * v, z, two, two)
    rp = r2 ** (0.5 * p)
    rpm2 = r2 ** (0.5 * p - 1.0)
    rpm4 = r2 ** (0.5 * p - 2.0)
    return D2(rp, p * rpm2 * u, p * rpm2 * v, z,
              p * rpm2 + p * (p - 2.0) * rpm4 * u * u,
              p * rpm2 + p * (p - 2.0) * rpm4 * v * v)


def d2_pow_z(u, z, q: float) -> D2:
    z = np.asarray(z, float)
    zz = _zeros_like(u)
    if q == 0.0:
        return d2_const(1.0, u)
    return D2(z ** q, zz, zz, q * z ** (q - 1.0), zz, zz)


def d2_pow_absu(u, k: float) -> D2:
    """|u|^k on the half-plane u < 0 (so d|u|/du = -1)."""
    au = np.abs(np.asarray(u, float))
    z = _zeros_like(u)
    return D2(au ** k, -k * au ** (k - 1.0), z, z,
              k * (k - 1.0) * au ** (k - 2.0), z)


def d2_pow_absv(v, s: float) -> D2:
    v = np.asarray(v, float)
    av = np.abs(v)
    sg = np.sign(v)
    z = _zeros_like(v)
    return D2(av ** s, z, s * av ** (s - 1.0) * sg, z, z,
              s * (s - 1.0) * av ** (s - 2.0))


def d2_log_z(u, z) -> D2:
    z = np.asarray(z, float)
    zz = _zeros_like(u)
    return D2(np.log(z), zz, zz, 1.0 / z, zz, zz)


def d2_chain(g, g1, g2, inner: D2) -> D2:
    """g(inner) for a scalar function with supplied g, g', g'' at inner.f."""
    return D2(g,
              g1 * inner.f1, g1 * inner.f2, g1 * inner.f3,
              g2 * inner.f1 * inner.f1 + g1 * inner.f11,
              g2 * inner.f2 * inner.f2 + g1 * inner.f22)


def _bump(t):
    """exp(-1/t) extended by 0 for t <= 0, with first two derivatives."""
    t = np.asarray(t, float)
    pos = t > 1e-3  # exp(-1000) underflows anyway
    ts = np.where(pos, t, 1.0)
    e = np.where(pos, np.exp(-1.0 / ts), 0.0)
    d1 = np.where(pos, e / ts ** 2, 0.0)
    d2 = np.where(pos, e * (1.0 / ts ** 4 - 2.0 / ts ** 3), 0.0)
    return e, d1, d2


def smoothstep(x):
    """C-infinity ramp: 0 for x <= 1, 1 for x >= 2; returns (val, d1, d2).

    lam(x) = g(x-1) / (g(x-1) + g(2-x)) with g(t) = exp(-1/t) for t > 0.
    """
    x = np.asarray(x, float)
    n, n1, n2 = _bump(x - 1.0)
    m, m1, m2 = _bump(2.0 - x)
    m1 = -m1  # chain through (2 - x)
    d = n + m
    lo = d == 0.0  # only when x <= 1 (then n = 0) in exact arithmetic
    d = np.where(lo, 1.0, d)
    d1 = n1 + m1
    d2 = n2 + m2
    val = np.where(lo, 0.0, n / d)
    der1 = np.where(lo, 0.0, (n1 * d - n * d1) / d ** 2)
    der2 = np.where(lo, 0.0,
                    (n2 * d - n * d2) / d ** 2 - 2.0 * d1 * (n1 * d - n * d1) / d ** 3)
    return val, der1, der2


def _uvz_drift_coeffs(pts, p: ModelParams):
    u, v, z = pts
    ah = p.alpha_h
    z23 = z ** (2.0 / 3.0)
    b1 = -p.gamma * u - (ah * u * u - v * v) / z23
    b2 = -p.gamma * v - (ah + 1.0) * u * v / z23
    b3 = (1.0 - p.h) * u * z ** (1.0 / 3.0)
    return b1, b2, b3, p.kappa1 / z23, p.kappa2 / z23


def _xyz_drift_coeffs(pts, p: ModelParams):
    x, y, z = pts
    b1 = -p.gamma * x - (p.h * x * x - y * y) / z
    b2 = -p.gamma * y - (1.0 + p.h) * x * y / z
    b3 = (1.0 - p.h) * x
    one = np.ones(np.shape(x), dtype=float)
    return b1, b2, b3, p.kappa1 * one, p.kappa2 * one


def _q_uvz(pts, p):
    u, v, z = pts
    zero = np.zeros(np.shape(u), dtype=float)
    return u / (3.0 * z), v / (3.0 * z), -np.ones(np.shape(u)), zero, zero


def _q_xyz(pts, p):
    x, _, _ = pts
    zero = np.zeros(np.shape(x), dtype=float)
    return zero, zero, -np.ones(np.shape(x)), zero, zero


def _t1(pts, p):
    u, v, z = pts
    ah = p.alpha_h
    zero = np.zeros(np.shape(u), dtype=float)
    return (-(ah * u * u - v * v), -(ah + 1.0) * u * v,
            (1.0 - p.h) * u * z, zero, zero)


def _t2(pts, p):
    u, v, z = pts
    ah = p.alpha_h
    zero = np.zeros(np.shape(u), dtype=float)
    return (-ah * u * u, -(ah + 1.0) * u * v, (1.0 - p.h) * u * z, zero, zero)


def _a_op(pts, p):
    u, v, _ = pts
    ah = p.alpha_h
    one = np.ones(np.shape(u), dtype=float)
    zero = np.zeros(np.shape(u), dtype=float)
    return (-(ah * u * u - v * v), -(ah + 1.0) * u * v, zero,
            p.kappa1 * one, p.kappa2 * one)


def _m_op(pts, p):
    u, v, z = pts
    ah = p.alpha_h
    z23 = z ** (2.0 / 3.0)
    one = np.ones(np.shape(u), dtype=float)
    return (-p.gamma * u * z23 - (ah * u * u - v * v),
            -p.gamma * v * z23 - (ah + 1.0) * u * v,
            (1.0 - p.h) * u * z, p.kappa1 * one, p.kappa2 * one)


def _n_op(pts, p):
    u, v, z = pts
    ah = p.alpha_h
    one = np.ones(np.shape(u), dtype=float)
    return (-(ah * u * u - v * v), -(ah + 1.0) * u * v,
            (1.0 - p.h) * u * z, p.kappa1 * one, p.kappa2 * one)


def _t3_tilde(pts, p):
    """Channel operator in (u, eta, z): a_h*u*d_u + (3/2+h)*eta*d_eta + kappa2*d_eta^2 - (1-h)*z*d_z."""
    u, eta, z = pts
    one = np.ones(np.shape(u), dtype=float)
    zero = np.zeros(np.shape(u), dtype=float)
    return (p.alpha_h * u, (1.5 + p.h) * eta, -(1.0 - p.h) * z,
            zero, p.kappa2 * one)


OPERATORS = {
    "L_xyz": _xyz_drift_coeffs,
    "Q_xyz": _q_xyz,
    "L_uvz": _uvz_drift_coeffs,
    "Q_uvz": _q_uvz,
    "M": _m_op,
    "N": _n_op,
    "A": _a_op,
    "T1": _t1,
    "T2": _t2,
    "T3_tilde": _t3_tilde,
}


def operator_coeffs(name: str, pts, p: ModelParams):
    try:
        fn = OPERATORS[name]
    except KeyError:
        raise KeyError(f"unknown operator {name!r}; have {sorted(OPERATORS)}") from None
    return fn(tuple(np.asarray(c, float) for c in pts), p)


def apply_closed(name: str, bundle: D2, pts, p: ModelParams):
    b1, b2, b3, a1, a2 = operator_coeffs(name, pts, p)
    return (b1 * bundle.f1 + b2 * bundle.f2 + b3 * bundle.f3
            + a1 * bundle.f11 + a2 * bundle.f22)


def _fd_steps(c, rel):
    return rel * np.maximum(np.abs(c), 1.0)


def fd_bundle(func, pts, z_index: int = 2, z_upper: float | None = 1.0,
              region_of=None, scales=None) -> D2:
    """Finite-difference derivative bundle of an arbitrary scalar field.

    ``func`` maps coordinate arrays (c1, c2, c3) to values.  Central
    differences with steps scaled per point; the coordinate ``z_index`` is
    kept below ``z_upper`` (one-sided stencil near the cap) and positive.
    ``scales`` optionally overrides the per-coordinate step scale (arrays or
    None entries), for fields whose natural variation scale differs from the
    coordinate magnitude.  If ``region_of`` is given, stencil points whose
    region differs from the center are reported via
    :class:`InterfacePointError`.
    """
    c = [np.asarray(x, float) for x in pts]
    h1 = _EPS ** (1.0 / 3.0)  # first derivatives
    h2 = _EPS ** (1.0 / 4.0)  # second derivatives
    scales = [None, None, None] if scales is None else list(scales)
    f0 = func(*c)

    def shifted(i, delta):
        cs = [x.copy() for x in c]
        cs[i] = cs[i] + delta
        if region_of is not None:
            if np.any(region_of(*cs) != region_of(*c)):
                bad = np.nonzero(region_of(*cs) != region_of(*c))[0][:5]
                raise InterfacePointError(
                    f"stencil crosses a region interface at indices {bad.tolist()}")
        return func(*cs)

    grads = []
    for i in range(3):
        step = h1 * scales[i] if scales[i] is not None else _fd_steps(c[i], h1)
        if i == z_index:
            # z lives in (0, 1]; step relative to z keeps the stencil inside
            step = np.minimum(h1 * np.abs(c[i]), 0.25 * c[i])
            if z_upper is not None:
                room = z_upper - c[i]
                use_central = room >= step
                step_c = np.where(use_central, step, np.minimum(step, 0.25 * c[i]))
                fp = shifted(i, np.where(use_central, step_c, 0.0))
                fm = shifted(i, -step_c)
                fmm = shifted(i, -2.0 * step_c)
                central = (fp - fm) / (2.0 * step_c)
                onesided = (3.0 * f0 - 4.0 * fm + fmm) / (2.0 * step_c)
                grads.append(np.where(use_central, central, onesided))
                continue
        fp = shifted(i, step)
        fm = shifted(i, -step)
        grads.append((fp - fm) / (2.0 * step))

    seconds = []
    for i in (0, 1):
        step = h2 * scales[i] if scales[i] is not None else _fd_steps(c[i], h2)
        fp = shifted(i, step)
        fm = shifted(i, -step)
        seconds.append((fp - 2.0 * f0 + fm) / step ** 2)

    return D2(f0, grads[0], grads[1], grads[2], seconds[0], seconds[1])


def apply_fd(name: str, func, pts, p: ModelParams, region_of=None, scales=None):
    """Apply a named operator to a plain callable by central differences."""
    z_upper = 1.0 if name != "T3_tilde" else None
    bundle = fd_bundle(func, pts, z_upper=z_upper, region_of=region_of,
                       scales=scales)
    return apply_closed(name, bundle, pts, p)


def hormander_matrix(pts, p: ModelParams):
    """Columns [X1 | X2 | [X1, X0]] of the bracket-rank check, per point.

    X0 is the xyz drift field, X1 = sqrt(2 k1) d_x, X2 = sqrt(2 k2) d_y.
    The single bracket [X1, X0] = sqrt(2 k1) * d_x(X0) already completes
    the span: the determinant is 2 sqrt(k1 k2) * sqrt(2 k1) * (1 - h),
    independent of the point.
    """
    x, y, z = (np.asarray(c, float) for c in pts)
    n = x.shape if x.shape else (1,)
    s1 = math.sqrt(2.0 * p.kappa1)
    s2 = math.sqrt(2.0 * p.kappa2)
    M = np.zeros(n + (3, 3))
    M[..., 0, 0] = s1
    M[..., 1, 1] = s2
    M[..., 0, 2] = s1 * (-p.gamma - 2.0 * p.h * x / z)
    M[..., 1, 2] = s1 * (-(1.0 + p.h) * y / z)
    M[..., 2, 2] = s1 * (1.0 - p.h)
    return M


def hormander_determinant(pts, p: ModelParams):
    return np.abs(np.linalg.det(hormander_matrix(pts, p)))


def channel_fd_scales(u, v):
    """Step scales adapted to the channel coordinate eta = |u|^(1/2) v.

    Near the negative u-axis the local functions vary in v on the scale
    |u|^(-1/2); a coordinate-magnitude step would be far too coarse there.
    """
    u = np.asarray(u, float)
    sv = np.minimum(np.maximum(np.abs(v), 1.0), 5.0 / np.sqrt(np.abs(u)))
    return None, sv, None
