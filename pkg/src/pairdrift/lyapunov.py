"""Piecewise Lyapunov construction for the rescaled chart.

Phase space outside a compact center splits into an outward cone R0, a
transition cone R1, two noise-dominated wedges R2 along the negative u-axis,
the channel strip R3 between them, the inner slab (small z, bounded radius),
and the remaining core.  On each outer region a local function phi_{j,i}
(j = region, i = 1, 2) is defined so that the regional dominant-balance
operator pushes it down at a prescribed rate, and consecutive local functions
agree continuously on the interfaces:

    phi_0i = r^{p_i} z^{q_i}
    phi_1i = r^{p_i} z^{q_i} |r/v|^{b_i} [ (C^-2+1)^{-b_i/2}
             + c_1i * int_{u/|v|}^{1/C} (1+t^2)^{(a_i-b_i-1)/2} dt ]
    phi_2i = A_2i |u|^{p_i} z^{q_i} |u/v|^{b_i} + B_2i |u|^{p_i} z^{q_i} |u/v|^{a_i}
    phi_3i = A_3i |u|^{p_i+1.5 b_i} z^{q_i} G_{g_i}(eta)
             + |u|^{p_i+1.5 a_i} z^{q_i} [B_3i G_{gt_i}(eta) + C_3i (G_{gt_i}(eta)-1)]

with a_i = alpha_i, b_i = beta_i, eta = |u|^(1/2) v, and G the exit-time
Laplace transform of :mod:`pairdrift.exit_law`.  The averaging function psi
handles the inner slab, and the assembled function is

    Phi = lam(r/r*) * (phi_1 + phi_2) + D*psi - (D*a_h*J/(1-h)) * log z + A*z,

where lam is a smooth 0-1 ramp and (D, A) are calibrated from measured
remainder constants by :mod:`pairdrift.verify`.  All evaluations carry exact
closed-form derivative bundles (see :mod:`pairdrift.operators`).
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, replace, asdict

import numpy as np

from .exit_law import ExitLaplace
from .model import ModelParams
from .operators import (D2, d2_chain, d2_const, d2_coord, d2_log_z,
                        d2_pow_absu, d2_pow_absv, d2_pow_r, d2_pow_z,
                        smoothstep)
from .quadrature import ConeIntegral

__all__ = [
    "Region", "LyapunovParams", "LedgerError", "make_lyapunov_params",
    "classify", "classify_codes", "eta_of",
    "phi0_bundle", "phi1_bundle", "phi2_bundle", "phi3_bundle",
    "phi_bundle", "psi_bundle", "phi_outer_bundle", "Phi_bundle",
    "phi0", "phi1", "phi2", "phi3", "psi", "Phi", "Psi",
    "exit_laplace", "lambda_ramp_bundle",
]


class LedgerError(ValueError):
    """A constant ledger violates one of its defining constraints."""


class Region(enum.Enum):
    R0 = 0
    R1 = 1
    R2 = 2
    R3 = 3
    INNER = 4
    CORE = 5


@dataclass(frozen=True)
class LyapunovParams:
    """Validated constant ledger of the piecewise construction.

    Two-tuples are indexed by i-1 for i = 1, 2 (and 3, 4 for the
    moment-optimal alternative exponents ``p_alt`` etc., which are carried
    and validated but not used by the certification checks).  ``D`` and
    ``A_coef`` stay None until the remainder constants (D1, D2, c2_rem)
    have been measured; :func:`pairdrift.verify.complete_ledger` fills them.
    """

    p: tuple
    q: tuple
    alpha: tuple
    beta: tuple
    C: float
    r_star: float
    eta_star: float
    eps0: float
    c1: tuple
    c2: tuple
    c3: tuple
    A2: tuple
    B2: tuple
    A3: tuple
    B3: tuple
    C3: tuple
    gam: tuple
    gamt: tuple
    J: float
    m: float
    c_star: float
    p_alt: tuple
    q_alt: tuple
    alpha_alt: tuple
    beta_alt: tuple
    D: float | None = None
    A_coef: float | None = None
    D1: float | None = None
    D2: float | None = None
    c2_rem: float | None = None

    @property
    def completed(self) -> bool:
        return self.D is not None and self.A_coef is not None

    def eps_min(self, p: ModelParams) -> float:
        """Dissipation floor min(m*a_h/2, (kappa1+kappa2)/4) of the averaging bound."""
        return min(self.m * p.alpha_h / 2.0, (p.kappa1 + p.kappa2) / 4.0)

    def complete(self, p: ModelParams, D1: float, D2: float,
                 c2_rem: float) -> "LyapunovParams":
        """Fill the calibrated constants from measured remainders.

        D = 2*c2_rem / eps_min makes the averaging dissipation eat the outer
        remainder twice over; A = D*a_h*J/(1-h) + D*D2 + c2_rem cancels every
        boundary local-time contribution.
        """
        D = 2.0 * c2_rem / self.eps_min(p)
        A = D * p.alpha_h * self.J / (1.0 - p.h) + D * D2 + c2_rem
        return replace(self, D1=D1, D2=D2, c2_rem=c2_rem, D=D, A_coef=A)

    def ledger_hash(self) -> str:
        payload = {k: v for k, v in asdict(self).items()}
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True, default=float).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return asdict(self)


def _validate(h: float, gamma: float, kappa2: float, p, q, alpha, beta,
              C, r_star, eta_star, c_star, m, tag="") -> list:
    bad = []
    i1, i2 = (0, 1)
    names = ("1", "2") if not tag else ("3", "4")
    if not tag and q[i1] != 0.0:
        bad.append(f"q1 must equal 0 (got {q[i1]})")
    if tag and abs(q[i1] - p[i1] / 3.0 - 1.0) > 1e-12:
        bad.append(f"alternative ledger requires q3 - p3/3 = 1 "
                   f"(got {q[i1] - p[i1] / 3.0})")
    for i, nm in zip((i1, i2), names):
        if p[i] <= 0:
            bad.append(f"p{nm} must be positive (got {p[i]})")
        if not (0.0 < beta[i] < alpha[i] < 1.0):
            bad.append(f"exponent chain 0 < beta{nm} < alpha{nm} < 1 violated: "
                       f"beta{nm}={beta[i]:.6g}, alpha{nm}={alpha[i]:.6g}")
    if tag and q[i2] <= 0:
        bad.append(f"q4 must be positive (got {q[i2]})")
    if not tag and q[i2] <= 0:
        bad.append(f"q2 must be positive (got {q[i2]})")
    if q[i2] <= p[i2] / 3.0 + alpha[i2] / 2.0:
        bad.append(f"q{names[1]} > p{names[1]}/3 + alpha{names[1]}/2 violated: "
                   f"q{names[1]}={q[i2]:.6g}, bound={p[i2] / 3.0 + alpha[i2] / 2.0:.6g}")
    if not tag and p[i2] <= p[i1]:
        bad.append(f"p2 > p1 violated: p2={p[i2]:.6g}, p1={p[i1]:.6g}")
    if p[i2] + 1.5 * alpha[i2] <= p[i1] + 1.5 * alpha[i1]:
        bad.append(f"p{names[1]} + 1.5*alpha{names[1]} > p{names[0]} + "
                   f"1.5*alpha{names[0]} violated")
    if not tag:
        if C <= 0:
            bad.append(f"cone parameter C must be positive (got {C})")
        if abs(eta_star - C * math.sqrt(kappa2)) > 1e-9 * max(1.0, eta_star):
            bad.append("eta_star must equal C*sqrt(kappa2)")
        if r_star < 10.0 * max(C, eta_star, gamma) - 1e-9:
            bad.append(f"r_star must be at least 10*max(C, eta_star, gamma) "
                       f"= {10.0 * max(C, eta_star, gamma):.6g} (got {r_star})")
        if not (0.0 < c_star < 2.0 / 25.0):
            bad.append(f"c_star must lie in (0, 2/25) so that m > 0 (got {c_star})")
        if m <= 0:
            bad.append(f"averaging constant m must be positive (got {m})")
    return bad


def _default_i2(h: float, alpha2: float | None, slack: float = 0.1):
    """Second exponent row: (p2, q2, alpha2) with beta2 inside (0, alpha2).

    The base recipe q2 = p2/3 + alpha2/2 + slack with p2 = 2, alpha2 = 0.95
    only lands beta2 = h*p2 - (1-h)*(alpha2/2 + slack) inside (0, alpha2)
    for a middle range of h.  For small h, p2 must grow like 1/h; a lower
    alpha2 is used there to keep the total exponent p2 + 1.5*alpha2 (and
    with it the dynamic range of the assembled certification) small.  For
    large h, beta2 is re-centered through a larger q2 instead.
    """
    ah = 1.0 / 3.0 + 2.0 / 3.0 * h

    def build(a2):
        p2 = max(2.0, 1.5 * (1.0 - h) * (a2 / 2.0 + slack) / h)
        q2 = p2 / 3.0 + a2 / 2.0 + slack
        beta2 = ah * p2 - (1.0 - h) * q2
        if not (0.02 < beta2 < a2 - 0.02):
            beta2 = 0.5 * a2
            q2 = (ah * p2 - beta2) / (1.0 - h)
        return p2, q2, a2

    if alpha2 is not None:
        return build(alpha2)
    p2, q2, a2 = build(0.95)
    if p2 > 2.0:
        p2, q2, a2 = build(0.6)
    return p2, q2, a2


def _alt_ledger(h: float, lam_frac: float = 0.8):
    """Moment-optimal exponent rows (i = 3, 4), pinned by q3 - p3/3 = 1.

    lam_frac fixes the targeted radial moment lambda = lam_frac * 2/h via
    beta3 = lam_frac - (1 - lam_frac)*... reduced to beta3 = 2*lam_frac - 1
    when lambda = p3 + 1; alpha3 sits midway between beta3 and 1.
    """
    beta3 = 2.0 * lam_frac - 1.0
    if not (0.0 < beta3 < 1.0):
        raise LedgerError(f"moment fraction {lam_frac} puts beta3 = {beta3} outside (0, 1)")
    alpha3 = 0.5 * (beta3 + 1.0)
    p3 = (beta3 + 1.0 - h) / h
    q3 = (beta3 + 1.0 + 2.0 * h) / (3.0 * h)
    alpha4 = 0.5 * (alpha3 + 1.0)
    p4 = p3 + 1.0
    ah = 1.0 / 3.0 + 2.0 / 3.0 * h
    q4 = p4 / 3.0 + alpha4 / 2.0 + 0.1
    beta4 = ah * p4 - (1.0 - h) * q4
    if not (0.02 < beta4 < alpha4 - 0.02):
        beta4 = 0.5 * alpha4
        q4 = (ah * p4 - beta4) / (1.0 - h)
    return (p3, p4), (q3, q4), (alpha3, alpha4), (beta3, beta4)


_CONE_CACHE: dict = {}


def cone_integral(alpha: float, beta: float, C: float) -> ConeIntegral:
    key = (round(alpha, 14), round(beta, 14), round(C, 14))
    if key not in _CONE_CACHE:
        _CONE_CACHE[key] = ConeIntegral(alpha, beta, C)
    return _CONE_CACHE[key]


def make_lyapunov_params(p: ModelParams, C: float = 10.0,
                         r_star: float | None = None,
                         p1: float = 1.0, q1: float = 0.0,
                         alpha1: float = 0.9,
                         p2: float | None = None, q2: float | None = None,
                         alpha2: float | None = None,
                         c_star: float = 0.002, eps0: float = 0.05,
                         lam_frac: float = 0.8) -> LyapunovParams:
    """Build and validate the full constant ledger for the given model.

    Defaults follow the exponent recipe (p1, q1) = (1, 0), alpha1 = 0.9
    (requiring h < 0.85 so beta1 = a_h < alpha1) and an i = 2 row with
    beta2 placed inside (0, alpha2).  Raises :class:`LedgerError` listing
    every violated constraint.
    """
    h, gamma, kappa1, kappa2 = p.h, p.gamma, p.kappa1, p.kappa2
    ah = p.alpha_h
    # keep a working gap alpha1 - beta1 as beta1 = a_h approaches 0.9;
    # the default row is only defined for h < 0.85 (beta1 = a_h < 0.9)
    if alpha1 == 0.9 and 0.82 < ah < 0.9:
        alpha1 = 0.5 * (ah + 1.0)
    if p2 is None and q2 is None:
        p2, q2, alpha2 = _default_i2(h, alpha2)
    elif q2 is None:
        alpha2 = 0.95 if alpha2 is None else alpha2
        q2 = p2 / 3.0 + alpha2 / 2.0 + 0.1
    elif alpha2 is None:
        alpha2 = 0.95
    ps = (float(p1), float(p2))
    qs = (float(q1), float(q2))
    alphas = (float(alpha1), float(alpha2))
    betas = tuple(ah * ps[i] - (1.0 - h) * qs[i] for i in range(2))
    eta_star = C * math.sqrt(kappa2)
    if r_star is None:
        r_star = max(100.0, 10.0 * max(C, eta_star, gamma))
    m_den = 0.5 - 12.0 * c_star / (2.0 - c_star)
    m = kappa1 * c_star / (ah * m_den) if m_den > 0 else -1.0
    J = ((kappa1 + kappa2) / (2.0 * ah)) ** (2.0 / 3.0)

    p_alt, q_alt, alpha_alt, beta_alt = _alt_ledger(h, lam_frac)

    bad = _validate(h, gamma, kappa2, ps, qs, alphas, betas, C, r_star,
                    eta_star, c_star, m)
    bad += _validate(h, gamma, kappa2, p_alt, q_alt, alpha_alt, beta_alt,
                     C, r_star, eta_star, c_star, m, tag="alt")
    if not (0.0 < eps0 < 1.0):
        bad.append(f"eps0 must lie in (0, 1) (got {eps0})")
    if bad:
        raise LedgerError("invalid constant ledger:\n  - " + "\n  - ".join(bad))

    c1 = tuple(betas[i] / (2.0 * C) for i in range(2))
    c2 = tuple(0.5 * c1[i] for i in range(2))
    c3 = tuple(c2[i] / (2.0 * eta_star ** alphas[i]) for i in range(2))
    B2 = tuple(c2[i] / (alphas[i] - betas[i]) for i in range(2))
    A2 = []
    for i in range(2):
        full = cone_integral(alphas[i], betas[i], C).full
        A2.append((C ** -2 + 1.0) ** (ps[i] / 2.0)
                  + c1[i] * (C ** -2 + 1.0) ** ((ps[i] + betas[i]) / 2.0) * full
                  - B2[i] * C ** (alphas[i] - betas[i]))
    gam = tuple((h + 1.5) * betas[i] for i in range(2))
    gamt = tuple(betas[i] + (h + 0.5) * alphas[i] for i in range(2))
    A3 = tuple(A2[i] / eta_star ** betas[i] for i in range(2))
    B3 = tuple(B2[i] / eta_star ** alphas[i] for i in range(2))
    C3 = tuple(c3[i] / gamt[i] for i in range(2))
    for i in range(2):
        if not (gam[i] < h + 1.5 and gamt[i] < h + 1.5):
            raise LedgerError(f"exit-law exponents must stay below h + 3/2 (i={i + 1})")
        if A2[i] <= 0:
            raise LedgerError(f"interface constant A2{i + 1} must be positive "
                              f"(got {A2[i]:.6g}); increase C")

    return LyapunovParams(
        p=ps, q=qs, alpha=alphas, beta=betas, C=float(C), r_star=float(r_star),
        eta_star=eta_star, eps0=float(eps0), c1=c1, c2=c2, c3=c3,
        A2=tuple(A2), B2=B2, A3=A3, B3=B3, C3=C3, gam=gam, gamt=gamt,
        J=J, m=m, c_star=float(c_star),
        p_alt=p_alt, q_alt=q_alt, alpha_alt=alpha_alt, beta_alt=beta_alt,
    )


# ---------------------------------------------------------------------------
# region decomposition


def eta_of(u, v):
    """Channel coordinate |u|^(1/2) * v."""
    return np.sqrt(np.abs(u)) * np.asarray(v, float)


def classify_codes(u, v, z, lp: LyapunovParams) -> np.ndarray:
    """Vectorized total classification; ties go to the lower region code.

    Outer regions claim r >= r_star first (R0 over R1 over R2 over R3),
    then the inner slab {r < r_star, z < eps0}, then the core.
    """
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    z = np.asarray(z, float)
    r = np.hypot(u, v)
    av = np.abs(v)
    outer = r >= lp.r_star
    c0 = outer & (lp.C * u >= av)
    c1 = outer & ~c0 & (u >= -lp.C * av)
    wedge = outer & ~c0 & ~c1
    big_eta = np.abs(eta_of(u, v)) >= lp.eta_star
    c2 = wedge & big_eta
    c3 = wedge & ~big_eta
    inner = ~outer & (z < lp.eps0)
    return np.select([c0, c1, c2, c3, inner],
                     [0, 1, 2, 3, 4], default=5).astype(np.int8)


def classify(s, lp: LyapunovParams) -> Region:
    """Classify a single state (uvz chart) into its region."""
    from .model import State, Chart
    if isinstance(s, State):
        if s.chart is not Chart.UVZ:
            raise ValueError("classification is defined in the uvz chart")
        u, v, z = s.c1, s.c2, s.c3
    else:
        u, v, z = s
    return Region(int(classify_codes(np.asarray([u]), np.asarray([v]),
                                     np.asarray([z]), lp)[0]))


# ---------------------------------------------------------------------------
# exit-law cache

_GS_CACHE: dict = {}


def exit_laplace(lp: LyapunovParams, p: ModelParams, s: float) -> ExitLaplace:
    key = (round(s, 14), round(p.h, 14), round(p.kappa2, 14), round(lp.eta_star, 14))
    if key not in _GS_CACHE:
        _GS_CACHE[key] = ExitLaplace(s, p.h, p.kappa2, lp.eta_star)
    return _GS_CACHE[key]


# ---------------------------------------------------------------------------
# local functions, with derivative bundles


def _idx(i: int) -> int:
    if i not in (1, 2):
        raise ValueError("local function index i must be 1 or 2")
    return i - 1


def phi0_bundle(pts, lp: LyapunovParams, i: int) -> D2:
    u, v, z = pts
    k = _idx(i)
    return d2_pow_r(u, v, lp.p[k]) * d2_pow_z(u, z, lp.q[k])


def phi1_bundle(pts, lp: LyapunovParams, i: int) -> D2:
    u, v, z = pts
    k = _idx(i)
    v = np.asarray(v, float)
    if np.any(v == 0.0):
        raise ValueError("phi1 is undefined at v = 0 (outside the closed R1 cone)")
    alpha, beta = lp.alpha[k], lp.beta[k]
    cone = cone_integral(alpha, beta, lp.C)
    x = np.asarray(u, float) / np.abs(v)
    s_val = cone.tail(x)
    s_d1 = -cone.integrand(x)
    expo = 0.5 * (alpha - beta - 1.0)
    s_d2 = -expo * 2.0 * x * (1.0 + x * x) ** (expo - 1.0)
    # inner bundle for x = u / |v|
    zero = np.zeros(np.shape(u), dtype=float)
    av = np.abs(v)
    x_b = D2(x, 1.0 / av, -x * np.sign(v) / av, zero, zero, 2.0 * x / (av * av))
    s_b = d2_chain(s_val, s_d1, s_d2, x_b)
    k0 = (lp.C ** -2 + 1.0) ** (-beta / 2.0)
    w_b = d2_const(k0, u) + lp.c1[k] * s_b
    return (d2_pow_r(u, v, lp.p[k] + beta) * d2_pow_absv(v, -beta)
            * d2_pow_z(u, z, lp.q[k]) * w_b)


def phi2_bundle(pts, lp: LyapunovParams, i: int) -> D2:
    u, v, z = pts
    k = _idx(i)
    if np.any(np.asarray(u, float) >= 0.0):
        raise ValueError("phi2 is defined on the half-plane u < 0")
    if np.any(np.asarray(v, float) == 0.0):
        raise ValueError("phi2 is undefined at v = 0")
    alpha, beta = lp.alpha[k], lp.beta[k]
    zq = d2_pow_z(u, z, lp.q[k])
    t_beta = d2_pow_absu(u, lp.p[k] + beta) * d2_pow_absv(v, -beta)
    t_alpha = d2_pow_absu(u, lp.p[k] + alpha) * d2_pow_absv(v, -alpha)
    return zq * (lp.A2[k] * t_beta + lp.B2[k] * t_alpha)


def _eta_bundle(u, v) -> D2:
    """eta = |u|^(1/2) * v on u < 0."""
    return d2_pow_absu(u, 0.5) * d2_coord(u, v, v, 1)


def phi3_bundle(pts, lp: LyapunovParams, p: ModelParams, i: int,
                coords: str = "uvz") -> D2:
    """phi_{3,i}; ``coords='ueta'`` treats the second coordinate as eta."""
    u, c2, z = pts
    k = _idx(i)
    if np.any(np.asarray(u, float) >= 0.0):
        raise ValueError("phi3 is defined on the half-plane u < 0")
    if coords == "uvz":
        eta_b = _eta_bundle(u, c2)
    elif coords == "ueta":
        eta_b = d2_coord(u, c2, c2, 1)
    else:
        raise ValueError("coords must be 'uvz' or 'ueta'")
    g_lo = exit_laplace(lp, p, lp.gam[k])
    g_hi = exit_laplace(lp, p, lp.gamt[k])
    eta = eta_b.f
    glo = d2_chain(g_lo.value(eta), g_lo.deriv(eta), g_lo.second(eta), eta_b)
    ghi = d2_chain(g_hi.value(eta), g_hi.deriv(eta), g_hi.second(eta), eta_b)
    zq = d2_pow_z(u, z, lp.q[k])
    lead_beta = d2_pow_absu(u, lp.p[k] + 1.5 * lp.beta[k])
    lead_alpha = d2_pow_absu(u, lp.p[k] + 1.5 * lp.alpha[k])
    inner = lp.B3[k] * ghi + lp.C3[k] * (ghi + d2_const(-1.0, u))
    return zq * (lp.A3[k] * (lead_beta * glo) + lead_alpha * inner)


def phi_bundle(region: Region, pts, lp: LyapunovParams, p: ModelParams,
               i: int) -> D2:
    """Local function of the given outer region."""
    if region is Region.R0:
        return phi0_bundle(pts, lp, i)
    if region is Region.R1:
        return phi1_bundle(pts, lp, i)
    if region is Region.R2:
        return phi2_bundle(pts, lp, i)
    if region is Region.R3:
        return phi3_bundle(pts, lp, p, i)
    raise ValueError(f"no local function on {region}")


def psi_bundle(pts, lp: LyapunovParams) -> D2:
    """Averaging function psi = psi1 + psi2 (z-independent, C^1 in (u, v))."""
    u, v, z = pts
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    J = lp.J
    r2b = d2_pow_r(u, v, 2.0)
    inner_mask = r2b.f <= J
    # psi_11 = J/2 - (J/2) log J - r^2/2 on r^2 <= J
    p11 = d2_const(0.5 * J - 0.5 * J * math.log(J), u) + (-0.5) * r2b
    # psi_12 = -(J/2) log(r^2) on r^2 >= J; guard the log at small r
    r2s = np.maximum(r2b.f, 1e-150)
    p12 = d2_chain(-0.5 * J * np.log(r2s), -0.5 * J / r2s,
                   0.5 * J / (r2s * r2s), r2b)

    def stitch(a: D2, b: D2, mask) -> D2:
        return D2(*(np.where(mask, ga, gb) for ga, gb in
                    zip((a.f, a.f1, a.f2, a.f3, a.f11, a.f22),
                        (b.f, b.f1, b.f2, b.f3, b.f11, b.f22))))

    psi1 = stitch(p11, p12, inner_mask)

    # psi_2 = -m * (u / r^2) * lam(r^2 / (J/2)); identically 0 for r^2 <= J/2
    sig = (2.0 / J) * r2b
    lam, lam1, lam2 = smoothstep(sig.f)
    lam_b = d2_chain(lam, lam1, lam2, sig)
    small = r2b.f <= 0.5 * J
    safe_r2 = np.where(small, 1.0, r2b.f)
    u_over_r2 = d2_coord(u, v, z, 0) * d2_chain(
        1.0 / safe_r2, -1.0 / safe_r2 ** 2, 2.0 / safe_r2 ** 3, r2b)
    psi2_full = (-lp.m) * (u_over_r2 * lam_b)
    zero = d2_const(0.0, u)
    psi2 = stitch(zero, psi2_full, small)
    return psi1 + psi2


def lambda_ramp_bundle(pts, lp: LyapunovParams) -> D2:
    """Smooth radial switch lam(r / r_star): 0 for r <= r_star, 1 for r >= 2 r_star."""
    u, v, z = pts
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    r = np.hypot(u, v)
    slots = [np.zeros(np.shape(u), dtype=float) for _ in range(6)]
    on = r > lp.r_star
    if np.any(on):
        rb = d2_pow_r(u[on], v[on], 1.0)
        lam, lam1, lam2 = smoothstep(rb.f / lp.r_star)
        b = d2_chain(lam, lam1 / lp.r_star, lam2 / lp.r_star ** 2, rb)
        for slot, val in zip(slots, (b.f, b.f1, b.f2, b.f3, b.f11, b.f22)):
            slot[on] = val
    return D2(*slots)


def phi_outer_bundle(pts, lp: LyapunovParams, p: ModelParams) -> D2:
    """phi_1 + phi_2 stitched over the outer regions; zero where r < r_star."""
    u, v, z = pts
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    z = np.asarray(z, float)
    codes = classify_codes(u, v, z, lp)
    slots = [np.zeros(np.shape(u), dtype=float) for _ in range(6)]
    for code, region in ((0, Region.R0), (1, Region.R1),
                         (2, Region.R2), (3, Region.R3)):
        mask = codes == code
        if not np.any(mask):
            continue
        sub = (u[mask], v[mask], z[mask])
        total = phi_bundle(region, sub, lp, p, 1) + phi_bundle(region, sub, lp, p, 2)
        for slot, val in zip(slots, (total.f, total.f1, total.f2, total.f3,
                                     total.f11, total.f22)):
            slot[mask] = val
    return D2(*slots)


def Phi_bundle(pts, lp: LyapunovParams, p: ModelParams) -> D2:
    """Assembled function Phi on the uvz chart (requires a completed ledger)."""
    if not lp.completed:
        raise LedgerError("ledger not completed: D and A_coef are unset; "
                          "run the inner remainder calibration first")
    u, v, z = pts
    u = np.asarray(u, float)
    lam = lambda_ramp_bundle(pts, lp)
    outer = phi_outer_bundle(pts, lp, p)
    zlog = d2_log_z(u, z)
    zb = d2_coord(u, v, z, 2)
    slope = lp.D * p.alpha_h * lp.J / (1.0 - p.h)
    return lam * outer + lp.D * psi_bundle(pts, lp) + (-slope) * zlog \
        + lp.A_coef * zb


# value-only conveniences -----------------------------------------------------

def phi0(pts, lp, i):
    return phi0_bundle(pts, lp, i).f


def phi1(pts, lp, i):
    return phi1_bundle(pts, lp, i).f


def phi2(pts, lp, i):
    return phi2_bundle(pts, lp, i).f


def phi3(pts, lp, p, i, coords="uvz"):
    return phi3_bundle(pts, lp, p, i, coords).f


def psi(u, v, lp):
    return psi_bundle((u, v, np.ones_like(np.asarray(u, float))), lp).f


def Phi(pts, lp, p):
    return Phi_bundle(pts, lp, p).f


def Psi(pts_xyz, lp, p):
    """Phi composed with the chart map (x, y, z) -> (x z^{-1/3}, y z^{-1/3}, z)."""
    x, y, z = (np.asarray(c, float) for c in pts_xyz)
    w = z ** (-1.0 / 3.0)
    return Phi((x * w, y * w, z), lp, p)
