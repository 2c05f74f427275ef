"""Grid certification of the drift, boundary, and interface-flux inequalities.

Every check evaluates a pointwise margin

    margin = required_RHS - measured_LHS

on a log-spaced sample of its region (or interface), using the exact
closed-form derivative bundles; a check passes when the worst margin stays
above -tolerance.  Failures report a witness point whose standalone
re-evaluation reproduces the margin bit-for-bit.  This is sampling-based
certification, not interval arithmetic: the guard against lucky grids is
the verdict-stability-under-doubling property.

The regional drift targets:

    R0:  L phi_0i <= -gamma p_i r^p z^q - (beta_i / (2 sqrt(1+C^2))) r^{p+1} z^{q-2/3}
    R1:  L phi_1i <= -(c_1i/2) r^{p+1} z^q |r/v|^alpha
    R2:  L phi_2i <= -(c_2i/2) |u|^{p+1} z^{q-2/3} |u/v|^alpha
    R3:  L phi_3i <= -(c_3i/2) |u|^{p+1+1.5 alpha} z^{q-2/3}

boundary targets at z = 1 (sum over i = 1, 2):

    R0, R1:  Q(phi_1 + phi_2) <= -(q2/2 - p2/6) r^{p2}
    R2:      ... <= -(q2/2 - p2/6) |u|^{p2}
    R3:      ... <= -(1/2)(q2 - p2/3 - alpha2/2) B_32 |u|^{p2 + 1.5 alpha2}

flux targets (inward normal-derivative jumps are nonpositive):

    d_u phi_0i - d_u phi_1i <= 0   on  u = |v|/C
    d_u phi_1i - d_u phi_2i <= 0   on  u = -C|v|
    d_v phi_2i - d_v phi_3i <= 0   on  eta = +eta*   (mirrored at -eta*)

and the assembled form, after remainder calibration,

    L Phi <= -c1 z^{-2/3} (r^{p1+1} + r^{p2+1} z^{q2}) 1{r >= R*} - c2 z^{-2/3} + c3
    Q Phi <= 0 at z = 1.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .lyapunov import (LyapunovParams, Region, lambda_ramp_bundle,
                       make_lyapunov_params, phi0_bundle, phi1_bundle,
                       phi2_bundle, phi3_bundle, phi_outer_bundle,
                       psi_bundle, Phi_bundle)
from .model import ModelParams
from .operators import apply_closed, apply_fd, channel_fd_scales

__all__ = [
    "GridSpec", "VerificationReport", "check_drift", "check_boundary_Q",
    "check_flux", "check_inner_psi", "complete_ledger",
    "check_assembled_drift", "run_full_suite", "search_admissible",
    "reevaluate_margin", "DRIFT_CHECKS", "BOUNDARY_CHECKS", "FLUX_CHECKS",
]

DEFAULT_TOL = 1e-12


class Sampling(enum.Enum):
    LOG_RADIAL = "LogRadial"
    UNIFORM = "Uniform"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class GridSpec:
    region: Region
    samples: int = 10000
    sampling: Sampling = Sampling.LOG_RADIAL
    z_range: tuple = (1e-4, 1.0)
    r_max_factor: float = 100.0
    seed: int = 2024

    def __post_init__(self):
        if self.samples < 100:
            raise ValueError("certification grids need at least 100 samples")
        lo, hi = self.z_range
        if not (0.0 < lo < hi <= 1.0):
            raise ValueError("z_range must be a subinterval of (0, 1]")


@dataclass
class VerificationReport:
    check_id: str
    worst_margin: float
    worst_point: tuple
    passed: bool
    n_points: int
    tolerance: float
    ledger_hash: str
    grid_seed: int
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dict(check_id=self.check_id, worst_margin=self.worst_margin,
                 worst_point=list(self.worst_point), passed=self.passed,
                 n_points=self.n_points, tolerance=self.tolerance,
                 ledger_hash=self.ledger_hash, grid_seed=self.grid_seed)
        d.update({k: v for k, v in self.extras.items()
                  if isinstance(v, (int, float, str, bool))})
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _report(check_id, margins, pts, lp, grid_seed, tol, extras=None):
    margins = np.asarray(margins, float)
    i = int(np.argmin(margins))
    worst = float(margins[i])
    return VerificationReport(
        check_id=check_id, worst_margin=worst,
        worst_point=(float(pts[0][i]), float(pts[1][i]), float(pts[2][i])),
        passed=bool(worst >= -tol), n_points=margins.size, tolerance=tol,
        ledger_hash=lp.ledger_hash(), grid_seed=grid_seed,
        extras=extras or {})


# ---------------------------------------------------------------------------
# region samplers


def _z_sample(rng, n, z_range, boundary=False):
    if boundary:
        return np.ones(n)
    lo, hi = z_range
    return np.exp(rng.uniform(math.log(lo), math.log(hi), n))


def _radius(rng, n, lo, hi, sampling):
    if sampling is Sampling.UNIFORM:
        return rng.uniform(lo, hi, n)
    return np.exp(rng.uniform(math.log(lo), math.log(hi), n))


def sample_region(region: Region, lp: LyapunovParams, n: int, rng,
                  z_range=(1e-4, 1.0), r_max_factor=100.0, boundary=False,
                  sampling=Sampling.LOG_RADIAL):
    """Draw n points inside the (closed) region.

    Radii follow the requested sampling law (log-spaced by default, to
    cover the asymptotic scales the bounds address); ``boundary`` or
    ``sampling=Sampling.BOUNDARY`` pins z = 1.
    """
    boundary = boundary or sampling is Sampling.BOUNDARY
    z = _z_sample(rng, n, z_range, boundary)
    sgn = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    if region is Region.R0:
        r = _radius(rng, n, lp.r_star * 1.001, lp.r_star * r_max_factor,
                    sampling)
        th_max = math.atan(lp.C)
        th = rng.uniform(-th_max * 0.999, th_max * 0.999, n)
        return r * np.cos(th), r * np.sin(th), z
    if region is Region.R1:
        r = _radius(rng, n, lp.r_star * 1.001, lp.r_star * r_max_factor,
                    sampling)
        x = rng.uniform(-lp.C * 0.999, 0.999 / lp.C, n)
        av = r / np.sqrt(1.0 + x * x)
        return x * av, sgn * av, z
    if region is Region.R2:
        au_lo = max(lp.r_star, (lp.C * lp.eta_star) ** (2.0 / 3.0)) * 1.05
        au = _radius(rng, n, au_lo, au_lo * r_max_factor, sampling)
        av_lo = lp.eta_star / np.sqrt(au)
        av_hi = au / lp.C
        frac = rng.random(n)
        av = av_lo * (av_hi / av_lo) ** frac
        return -au, sgn * av, z
    if region is Region.R3:
        au = _radius(rng, n, lp.r_star * 1.001, lp.r_star * r_max_factor,
                     sampling)
        av_hi = np.minimum(au / lp.C, lp.eta_star / np.sqrt(au))
        av = rng.uniform(0.001, 0.999, n) * av_hi
        return -au, sgn * av, z
    raise ValueError(f"no sampler for {region}")


# ---------------------------------------------------------------------------
# drift checks


def _drift_margins(region: Region, i: int, pts, lp, p):
    u, v, z = pts
    k = i - 1
    if region is Region.R0:
        b = phi0_bundle(pts, lp, i)
        r = np.hypot(u, v)
        rhs = (-p.gamma * lp.p[k] * r ** lp.p[k] * z ** lp.q[k]
               - lp.beta[k] / (2.0 * math.sqrt(1.0 + lp.C ** 2))
               * r ** (lp.p[k] + 1.0) * z ** (lp.q[k] - 2.0 / 3.0))
    elif region is Region.R1:
        b = phi1_bundle(pts, lp, i)
        r = np.hypot(u, v)
        rhs = (-0.5 * lp.c1[k] * r ** (lp.p[k] + 1.0) * z ** lp.q[k]
               * np.abs(r / v) ** lp.alpha[k])
    elif region is Region.R2:
        b = phi2_bundle(pts, lp, i)
        rhs = (-0.5 * lp.c2[k] * np.abs(u) ** (lp.p[k] + 1.0)
               * z ** (lp.q[k] - 2.0 / 3.0) * np.abs(u / v) ** lp.alpha[k])
    elif region is Region.R3:
        b = phi3_bundle(pts, lp, p, i)
        rhs = (-0.5 * lp.c3[k]
               * np.abs(u) ** (lp.p[k] + 1.0 + 1.5 * lp.alpha[k])
               * z ** (lp.q[k] - 2.0 / 3.0))
    else:
        raise ValueError(f"no drift check on {region}")
    return rhs - apply_closed("L_uvz", b, pts, p)


def backend_agreement(name: str, bundle_fn, pts, p: ModelParams,
                      scales=None) -> float:
    """Worst relative disagreement of closed-form vs FD operator values.

    Normalized by the operator's term-magnitude scale sum |b_i f_i| +
    |a_i f_ii| (not the possibly cancelled total), the standard
    conditioning-aware comparison.
    """
    from .operators import operator_coeffs
    bundle = bundle_fn(pts)
    closed = apply_closed(name, bundle, pts, p)
    fd = apply_fd(name, lambda a, b_, c: bundle_fn((a, b_, c)).f, pts, p,
                  scales=scales)
    b1, b2, b3, a1, a2 = operator_coeffs(name, pts, p)
    scale = (np.abs(b1 * bundle.f1) + np.abs(b2 * bundle.f2)
             + np.abs(b3 * bundle.f3) + np.abs(a1 * bundle.f11)
             + np.abs(a2 * bundle.f22))
    return float(np.max(np.abs(closed - fd) / np.maximum(scale, 1e-300)))


def check_drift(region: Region, i: int, lp: LyapunovParams, p: ModelParams,
                grid: GridSpec, tol: float = DEFAULT_TOL) -> VerificationReport:
    """Certify the regional interior drift bound for phi_{region,i}."""
    rng = np.random.default_rng(grid.seed)
    pts = sample_region(region, lp, grid.samples, rng, grid.z_range,
                        grid.r_max_factor, sampling=grid.sampling)
    margins = _drift_margins(region, i, pts, lp, p)
    extras = {}
    if region is Region.R3:
        # gate: both derivative backends agree on a subsample
        m = min(200, grid.samples)
        sub = tuple(c[:m] for c in pts)
        gate = backend_agreement("L_uvz",
                                 lambda q: phi3_bundle(q, lp, p, i), sub, p,
                                 scales=channel_fd_scales(sub[0], sub[1]))
        extras["fd_agreement"] = gate
        if gate > 1e-5:
            extras["fd_gate_failed"] = True
    rep = _report(f"drift_{region.name}_i{i}", margins, pts, lp, grid.seed, tol, extras)
    if extras.get("fd_gate_failed"):
        rep.passed = False
    return rep


def check_boundary_Q(region: Region, lp: LyapunovParams, p: ModelParams,
                     grid: GridSpec, tol: float = DEFAULT_TOL) -> VerificationReport:
    """Certify the z = 1 boundary-operator bound for phi_1 + phi_2."""
    rng = np.random.default_rng(grid.seed)
    pts = sample_region(region, lp, grid.samples, rng, grid.z_range,
                        grid.r_max_factor, boundary=True)
    u, v, z = pts
    if region is Region.R3:
        total = phi3_bundle(pts, lp, p, 1) + phi3_bundle(pts, lp, p, 2)
    else:
        bfun = {Region.R0: phi0_bundle, Region.R1: phi1_bundle,
                Region.R2: phi2_bundle}[region]
        total = bfun(pts, lp, 1) + bfun(pts, lp, 2)
    lhs = apply_closed("Q_uvz", total, pts, p)
    q2, p2, a2 = lp.q[1], lp.p[1], lp.alpha[1]
    if region in (Region.R0, Region.R1):
        rhs = -(q2 / 2.0 - p2 / 6.0) * np.hypot(u, v) ** p2
    elif region is Region.R2:
        rhs = -(q2 / 2.0 - p2 / 6.0) * np.abs(u) ** p2
    else:
        rhs = (-0.5 * (q2 - p2 / 3.0 - a2 / 2.0) * lp.B3[1]
               * np.abs(u) ** (p2 + 1.5 * a2))
    return _report(f"boundary_{region.name}", rhs - lhs, pts, lp,
                   grid.seed, tol)


# ---------------------------------------------------------------------------
# interface flux


class Interface(enum.Enum):
    R0R1 = "R0R1"
    R1R2 = "R1R2"
    R2R3 = "R2R3"


def _interface_points(iface: Interface, lp, n, rng, z_range, r_max_factor):
    z = _z_sample(rng, n, z_range)
    sgn = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    if iface is Interface.R0R1:
        r = np.exp(rng.uniform(math.log(lp.r_star * 1.001),
                               math.log(lp.r_star * r_max_factor), n))
        av = r / math.sqrt(1.0 + 1.0 / lp.C ** 2)
        return av / lp.C, sgn * av, z
    if iface is Interface.R1R2:
        r = np.exp(rng.uniform(math.log(lp.r_star * 1.001),
                               math.log(lp.r_star * r_max_factor), n))
        av = r / math.sqrt(1.0 + lp.C ** 2)
        return -lp.C * av, sgn * av, z
    au_lo = max(lp.r_star, (lp.C * lp.eta_star) ** (2.0 / 3.0)) * 1.05
    au = np.exp(rng.uniform(math.log(au_lo), math.log(au_lo * r_max_factor), n))
    return -au, sgn * lp.eta_star / np.sqrt(au), z


def check_flux(iface: Interface, i: int, lp: LyapunovParams, p: ModelParams,
               grid: GridSpec, tol: float = DEFAULT_TOL) -> VerificationReport:
    """Certify the sign of the normal-derivative jump across an interface.

    R0R1 and R1R2 compare u-derivatives; R2R3 compares v-derivatives on
    both channel walls eta = +-eta* (the v < 0 wall flips the jump sign).
    """
    rng = np.random.default_rng(grid.seed)
    pts = _interface_points(iface, lp, grid.samples, rng, grid.z_range,
                            grid.r_max_factor)
    u, v, z = pts
    extras = {}
    if iface is Interface.R0R1:
        jump = phi0_bundle(pts, lp, i).f1 - phi1_bundle(pts, lp, i).f1
    elif iface is Interface.R1R2:
        jump = phi1_bundle(pts, lp, i).f1 - phi2_bundle(pts, lp, i).f1
    else:
        inner = phi2_bundle(pts, lp, i).f2 - phi3_bundle(pts, lp, p, i).f2
        jump = np.where(v > 0, inner, -inner)
        k = i - 1
        lhs = (lp.alpha[k] / lp.eta_star ** lp.alpha[k] * lp.B2[k]
               - lp.gamt[k] / (p.h + 1.5) * (lp.B3[k] + lp.C3[k]))
        rhs = lp.c2[k] / (2.0 * (p.h + 1.5) * lp.eta_star ** lp.alpha[k])
        extras["endpoint_identity_residual"] = abs(lhs - rhs)
    return _report(f"flux_{iface.value}_i{i}", -np.asarray(jump), pts, lp,
                   grid.seed, tol, extras)


# ---------------------------------------------------------------------------
# inner remainders and ledger completion


def _inner_grid(lp, n, rng, z_range, boundary=False):
    """(u, v) covering the averaging scales through very large radius."""
    r = np.concatenate([
        rng.uniform(0.0, 2.0 * math.sqrt(lp.J), n // 3),
        np.exp(rng.uniform(math.log(1e-2), math.log(3.0 * lp.r_star), n // 3)),
        np.exp(rng.uniform(math.log(3.0 * lp.r_star), math.log(1e7),
                           n - 2 * (n // 3))),
    ])
    th = rng.uniform(-math.pi, math.pi, n)
    z = _z_sample(rng, n, z_range, boundary)
    return r * np.cos(th), r * np.sin(th), z


def check_inner_psi(lp: LyapunovParams, p: ModelParams, grid: GridSpec,
                    tol: float = DEFAULT_TOL) -> VerificationReport:
    """Certify the averaging bracket and measure the remainders D1, D2.

    The drift of psi splits as  L psi = B(u,v) z^{-2/3} + G(u,v) - eps z^{-2/3}
    + u a_h J z^{-2/3}, with bracket B = A psi - a_h J u + eps_min and
    G = -gamma (u d_u + v d_v) psi.  The check certifies B <= 0 pointwise
    (margin = -B); only then is the supremum over z attained at z = 1 and

        D1 = sup (B + G),        D2 = sup_{z=1} Q psi

    are finite.  Both suprema are grid maxima over (u, v), exact in z.
    """
    rng = np.random.default_rng(grid.seed)
    pts = _inner_grid(lp, grid.samples, rng, grid.z_range, boundary=True)
    u, v, z = pts
    psi_b = psi_bundle(pts, lp)
    bracket = (apply_closed("A", psi_b, pts, p)
               - u * p.alpha_h * lp.J + lp.eps_min(p))
    g_term = -p.gamma * (u * psi_b.f1 + v * psi_b.f2)
    D1 = max(float((bracket + g_term).max()), 1e-9)
    qpsi = apply_closed("Q_uvz", psi_b, pts, p)
    D2 = max(float(qpsi.max()), 1e-9)
    rep = _report("inner_psi", -bracket, pts, lp, grid.seed, tol,
                  extras={"D1": D1, "D2": D2})
    return rep


def _annulus_grid(lp, n, rng, z_range, boundary=False):
    r = np.exp(rng.uniform(math.log(lp.r_star * 1.0001),
                           math.log(2.0 * lp.r_star), n))
    th = rng.uniform(-math.pi, math.pi, n)
    z = _z_sample(rng, n, z_range, boundary)
    return r * np.cos(th), r * np.sin(th), z


def complete_ledger(lp: LyapunovParams, p: ModelParams,
                    samples: int = 4000, seed: int = 77,
                    z_range=(1e-4, 1.0)) -> LyapunovParams:
    """Measure the remainder constants and fill D and A_coef.

    c2_rem bounds the switch-annulus remainder of lam * (phi_1 + phi_2)
    under both operators (positive parts, inflated 25% against grid-max
    undershoot); D1 and D2 come from :func:`check_inner_psi`.
    """
    rng = np.random.default_rng(seed)
    pts = _annulus_grid(lp, samples, rng, z_range)
    lam_phi = lambda_ramp_bundle(pts, lp) * phi_outer_bundle(pts, lp, p)
    interior = apply_closed("L_uvz", lam_phi, pts, p) * pts[2] ** (2.0 / 3.0)
    bpts = _annulus_grid(lp, samples, rng, z_range, boundary=True)
    lam_phi_b = lambda_ramp_bundle(bpts, lp) * phi_outer_bundle(bpts, lp, p)
    bound = apply_closed("Q_uvz", lam_phi_b, bpts, p)
    c2_rem = 1.25 * max(float(interior.max()), float(bound.max()), 1e-6)
    inner = check_inner_psi(lp, p, GridSpec(Region.CORE, samples=samples,
                                            z_range=z_range, seed=seed + 1))
    return lp.complete(p, inner.extras["D1"], inner.extras["D2"], c2_rem)


def check_assembled_drift(lp: LyapunovParams, p: ModelParams, grid: GridSpec,
                          tol: float = DEFAULT_TOL):
    """Certify the assembled interior and boundary bounds for Phi.

    Finds the crossover radius R* adaptively; beyond it the decay term must
    dominate the calibrated linear remainder (1-h)*A*u*z^(1/3), for which
    r^{p1} >= (1-h)*A / c1 is needed, so R* scales with the (large)
    calibrated constants.  c1 is then half the worst decay rate observed on
    a disjoint coarse grid over [R*, 2R*], and the certification asserts

        L Phi <= -c1 z^{-2/3} (r^{p1+1} + r^{p2+1} z^{q2}) 1{r >= R*}
                 - c2 z^{-2/3} + c3           (check ``assembled_L``)
        Q Phi <= 0 at z = 1                   (check ``assembled_Q``)

    with c2 the calibrated annulus remainder and c3 = D*D1 + (1-h)*A*R*.
    """
    if not lp.completed:
        raise ValueError("assembled check needs a completed ledger "
                         "(run complete_ledger first)")
    c2 = lp.c2_rem

    def decay_of(pts):
        u, v, z = pts
        r = np.hypot(u, v)
        return z ** (-2.0 / 3.0) * (r ** (lp.p[0] + 1.0)
                                    + r ** (lp.p[1] + 1.0) * z ** lp.q[1])

    # analytic decay floor: worst coefficient of r^{p_i+1} z^{q_i - 2/3}
    # guaranteed by the regional bounds over every direction
    cone = 1.0 + lp.C ** -2
    floors = []
    for k in range(2):
        u_min = lp.r_star / math.sqrt(cone)
        floors.append(min(
            lp.beta[k] / (2.0 * math.sqrt(1.0 + lp.C ** 2)),
            lp.c1[k] / 2.0,
            0.5 * lp.c2[k] * lp.C ** lp.alpha[k]
            * cone ** (-(lp.p[k] + 1.0) / 2.0),
            0.5 * lp.c3[k] * u_min ** (1.5 * lp.alpha[k])
            * cone ** (-(lp.p[k] + 1.0) / 2.0),
        ))
    c1_floor = 0.5 * min(floors)
    c1 = 0.5 * c1_floor
    # beyond R* the linear remainder (1-h) A u z^{1/3} is eaten by the
    # spare half of the c1_floor envelope: r^{p1} >= 2 (1-h) A / c1_floor
    max_expo = lp.p[1] + 1.5 * lp.alpha[1] + 2.5
    R_cap = 10.0 ** (285.0 / max_expo)
    R_star = max(2.0 * lp.r_star,
                 (2.0 * (1.0 - p.h) * lp.A_coef / c1_floor) ** (1.0 / lp.p[0]))
    R_star = min(R_star, R_cap)

    def far_grid(n, R, rng_):
        r = np.exp(rng_.uniform(math.log(R), math.log(2.0 * R), n))
        th = rng_.uniform(-math.pi, math.pi, n)
        z = _z_sample(rng_, n, grid.z_range)
        return r * np.cos(th), r * np.sin(th), z

    c3 = lp.D * lp.D1 + (1.0 - p.h) * lp.A_coef * R_star
    rng2 = np.random.default_rng(grid.seed)
    n_far = grid.samples // 2
    n_near = grid.samples - n_far
    far_pts = far_grid(n_far, R_star, rng2)
    r_near = np.exp(rng2.uniform(math.log(1e-2), math.log(R_star), n_near))
    th = rng2.uniform(-math.pi, math.pi, n_near)
    z_near = _z_sample(rng2, n_near, grid.z_range)
    near_pts = (r_near * np.cos(th), r_near * np.sin(th), z_near)
    pts = tuple(np.concatenate([a, b]) for a, b in zip(far_pts, near_pts))
    far_mask = np.hypot(pts[0], pts[1]) >= R_star
    lphi = apply_closed("L_uvz", Phi_bundle(pts, lp, p), pts, p)
    rhs = (-c1 * decay_of(pts) * far_mask
           - c2 * pts[2] ** (-2.0 / 3.0) + c3)
    rep_L = _report("assembled_L", rhs - lphi, pts, lp, grid.seed, tol,
                    extras={"c1": c1, "c2": c2, "c3": c3, "R_star": R_star})
    bpts_r = np.exp(rng2.uniform(math.log(1e-2), math.log(2.0 * R_star),
                                 grid.samples))
    bth = rng2.uniform(-math.pi, math.pi, grid.samples)
    bpts = (bpts_r * np.cos(bth), bpts_r * np.sin(bth), np.ones(grid.samples))
    qphi = apply_closed("Q_uvz", Phi_bundle(bpts, lp, p), bpts, p)
    rep_Q = _report("assembled_Q", -qphi, bpts, lp, grid.seed, tol,
                    extras={"c2": c2})
    return rep_L, rep_Q


# ---------------------------------------------------------------------------
# suite running, witness re-evaluation, admissibility search

DRIFT_CHECKS = [(r, i) for r in (Region.R0, Region.R1, Region.R2, Region.R3)
                for i in (1, 2)]
BOUNDARY_CHECKS = [Region.R0, Region.R1, Region.R2, Region.R3]
FLUX_CHECKS = [(f, i) for f in Interface for i in (1, 2)]


def _run_one_check(job):
    kind, args = job
    if kind == "drift":
        return check_drift(*args)
    if kind == "boundary":
        return check_boundary_Q(*args)
    if kind == "flux":
        return check_flux(*args)
    if kind == "inner":
        return check_inner_psi(*args)
    raise KeyError(kind)


def run_full_suite(lp: LyapunovParams, p: ModelParams, samples: int = 10000,
                   seed: int = 2024, tol: float = DEFAULT_TOL,
                   z_range=(1e-4, 1.0), r_max_factor: float = 100.0,
                   with_assembled: bool = True, workers: int = 1) -> dict:
    """All certification checks; returns {check_id: VerificationReport}.

    The independent checks run across ``workers`` processes when asked;
    results are identical either way (every check seeds its own grid).
    The assembled check runs last, after remainder calibration.
    """
    def grid_for(region, n=samples, s=seed):
        return GridSpec(region, samples=n, z_range=z_range,
                        r_max_factor=r_max_factor, seed=s)

    jobs = [("drift", (region, i, lp, p, grid_for(region), tol))
            for region, i in DRIFT_CHECKS]
    jobs += [("boundary", (region, lp, p, grid_for(region), tol))
             for region in BOUNDARY_CHECKS]
    jobs += [("flux", (iface, i, lp, p, grid_for(Region.R0), tol))
             for iface, i in FLUX_CHECKS]
    jobs += [("inner", (lp, p, grid_for(Region.CORE), tol))]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one_check, jobs))
    else:
        results = [_run_one_check(job) for job in jobs]
    reports = {rep.check_id: rep for rep in results}
    if with_assembled:
        lp_full = complete_ledger(lp, p, samples=max(2000, samples // 2),
                                  seed=seed + 5, z_range=z_range)
        rep_L, rep_Q = check_assembled_drift(
            lp_full, p, grid_for(Region.CORE), tol)
        reports[rep_L.check_id] = rep_L
        reports[rep_Q.check_id] = rep_Q
        reports["_completed_ledger"] = lp_full
    return reports


def suite_passed(reports: dict) -> bool:
    return all(r.passed for k, r in reports.items()
               if isinstance(r, VerificationReport))


def reevaluate_margin(check_id: str, point, lp: LyapunovParams,
                      p: ModelParams):
    """Standalone pointwise margin at a reported witness (drift/boundary/flux)."""
    pts = tuple(np.asarray([c], float) for c in point)
    if check_id.startswith("drift_"):
        _, rname, itag = check_id.split("_")
        return float(_drift_margins(Region[rname], int(itag[1]), pts, lp, p)[0])
    if check_id.startswith("boundary_"):
        region = Region[check_id.split("_")[1]]
        grid = GridSpec(region, samples=100)
        u, v, z = pts
        if region is Region.R3:
            total = phi3_bundle(pts, lp, p, 1) + phi3_bundle(pts, lp, p, 2)
        else:
            bfun = {Region.R0: phi0_bundle, Region.R1: phi1_bundle,
                    Region.R2: phi2_bundle}[region]
            total = bfun(pts, lp, 1) + bfun(pts, lp, 2)
        lhs = apply_closed("Q_uvz", total, pts, p)
        q2, p2, a2 = lp.q[1], lp.p[1], lp.alpha[1]
        if region in (Region.R0, Region.R1):
            rhs = -(q2 / 2.0 - p2 / 6.0) * np.hypot(u, v) ** p2
        elif region is Region.R2:
            rhs = -(q2 / 2.0 - p2 / 6.0) * np.abs(u) ** p2
        else:
            rhs = (-0.5 * (q2 - p2 / 3.0 - a2 / 2.0) * lp.B3[1]
                   * np.abs(u) ** (p2 + 1.5 * a2))
        return float((rhs - lhs)[0])
    if check_id.startswith("flux_"):
        _, tag, itag = check_id.split("_")
        i = int(itag[1])
        iface = Interface(tag)
        u, v, z = pts
        if iface is Interface.R0R1:
            jump = phi0_bundle(pts, lp, i).f1 - phi1_bundle(pts, lp, i).f1
        elif iface is Interface.R1R2:
            jump = phi1_bundle(pts, lp, i).f1 - phi2_bundle(pts, lp, i).f1
        else:
            inner = phi2_bundle(pts, lp, i).f2 - phi3_bundle(pts, lp, p, i).f2
            jump = np.where(v > 0, inner, -inner)
        return float(-jump[0])
    raise KeyError(f"no standalone margin for {check_id}")


def search_admissible(h: float, p: ModelParams | None = None,
                      C_sweep=(4.0, 8.0, 16.0, 32.0, 64.0),
                      r_star_sweep=(1e2, 1e3, 1e4),
                      samples: int = 1500, seed: int = 11,
                      full_samples: int | None = None) -> LyapunovParams:
    """Geometric sweep over (C, r_star) until the whole quick suite passes.

    The printed quantifiers ("C, r_star large enough") are resolved by
    search; the returned ledger is the first sweep point whose checks all
    pass at reduced grid size.  Raises RuntimeError citing the blocking
    check when the sweep is exhausted.
    """
    if p is None:
        p = ModelParams(h=h)
    elif abs(p.h - h) > 0:
        raise ValueError("h argument disagrees with model params")
    blocking = None
    for C in C_sweep:
        for r_star in r_star_sweep:
            eta_star = C * math.sqrt(p.kappa2)
            if r_star < 10.0 * max(C, eta_star, p.gamma):
                continue
            try:
                lp = make_lyapunov_params(p, C=C, r_star=r_star)
            except Exception as e:  # invalid ledger at this sweep point
                blocking = f"ledger construction: {e}"
                continue
            reports = run_full_suite(lp, p, samples=samples, seed=seed,
                                     with_assembled=True)
            if suite_passed(reports):
                return lp
            bad = [k for k, r in reports.items()
                   if isinstance(r, VerificationReport) and not r.passed]
            blocking = f"C={C}, r_star={r_star}: failing {bad}"
    raise RuntimeError("no admissible ledger found in sweep; last blocker: "
                       f"{blocking}")
