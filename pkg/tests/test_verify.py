import dataclasses
import json
import math

import numpy as np
import pytest

from pairdrift.model import ModelParams
from pairdrift.lyapunov import Region, make_lyapunov_params
from pairdrift.verify import (GridSpec, Interface, VerificationReport,
                              check_assembled_drift, check_boundary_Q,
                              check_drift, check_flux, check_inner_psi,
                              complete_ledger, reevaluate_margin,
                              run_full_suite, sample_region,
                              search_admissible, suite_passed)


@pytest.fixture(scope="module")
def good():
    p = ModelParams(h=0.5)
    lp = make_lyapunov_params(p, C=16.0, r_star=1000.0)
    return p, lp


def grid(region, n=2000, seed=3):
    return GridSpec(region, samples=n, seed=seed)


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec(Region.R0, samples=50)
    with pytest.raises(ValueError):
        GridSpec(Region.R0, z_range=(0.0, 1.0))


def test_drift_checks_pass_on_good_ledger(good):
    p, lp = good
    for region in (Region.R0, Region.R1, Region.R2, Region.R3):
        for i in (1, 2):
            rep = check_drift(region, i, lp, p, grid(region))
            assert rep.passed, (region, i, rep.worst_margin)
            assert rep.worst_margin > 0


def test_drift_R0_fails_for_small_r_star():
    """A deliberately small r_star admits points violating the bound."""
    p = ModelParams(h=0.5)
    # bypass the r_star >= 10 max(...) guard via direct replace
    lp = make_lyapunov_params(p, C=16.0, r_star=1000.0)
    lp_bad = dataclasses.replace(lp, r_star=2.0)
    rep = check_drift(Region.R0, 1, lp_bad, p, grid(Region.R0, 4000))
    assert not rep.passed
    assert rep.worst_margin < 0
    # the witness point reproduces the margin standalone
    again = reevaluate_margin(rep.check_id, rep.worst_point, lp_bad, p)
    assert again == pytest.approx(rep.worst_margin, abs=1e-12 * max(1.0, abs(rep.worst_margin)))


def test_drift_R2_fails_for_small_C():
    p = ModelParams(h=0.5)
    lp = make_lyapunov_params(p, C=2.0, r_star=1000.0)
    rep = check_drift(Region.R2, 1, lp, p, grid(Region.R2, 4000))
    assert not rep.passed


def test_boundary_checks_pass(good):
    p, lp = good
    for region in (Region.R0, Region.R1, Region.R2, Region.R3):
        rep = check_boundary_Q(region, lp, p, grid(region))
        assert rep.passed, (region, rep.worst_margin)


def test_boundary_margin_scales_like_r_p2(good):
    p, lp = good
    from pairdrift.verify import _report
    from pairdrift.lyapunov import phi0_bundle
    from pairdrift.operators import apply_closed
    r_small, r_big = 2.0 * lp.r_star, 20.0 * lp.r_star
    out = []
    for r in (r_small, r_big):
        pts = (np.array([r / math.sqrt(2)]), np.array([r / math.sqrt(2)]),
               np.array([1.0]))
        total = phi0_bundle(pts, lp, 1) + phi0_bundle(pts, lp, 2)
        lhs = apply_closed("Q_uvz", total, pts, p)
        rhs = -(lp.q[1] / 2 - lp.p[1] / 6) * r ** lp.p[1]
        out.append(float((rhs - lhs)[0]))
    ratio = out[1] / out[0]
    assert ratio == pytest.approx((r_big / r_small) ** lp.p[1], rel=0.2)


def test_boundary_fails_when_q2_too_small():
    p = ModelParams(h=0.5)
    # q2 barely above the validity floor p2/3 + alpha2/2 still has
    # q2/2 - p2/6 - alpha2/4 > 0; violating cond means flipping the
    # boundary coefficient sign, so force q2 below p2/3 via replace
    lp = make_lyapunov_params(p, C=16.0, r_star=1000.0)
    q_bad = (lp.q[0], lp.p[1] / 3.0 - 0.05)
    lp_bad = dataclasses.replace(lp, q=q_bad)
    rep = check_boundary_Q(Region.R0, lp_bad, p, grid(Region.R0))
    assert not rep.passed


def test_flux_checks(good):
    p, lp = good
    for iface in Interface:
        for i in (1, 2):
            rep = check_flux(iface, i, lp, p, grid(Region.R0))
            assert rep.passed, (iface, i, rep.worst_margin)
    rep = check_flux(Interface.R2R3, 1, lp, p, grid(Region.R0))
    assert rep.extras["endpoint_identity_residual"] < 1e-15


def test_flux_endpoint_identity_all_h():
    for h in (0.1, 0.25, 0.5, 0.7):
        p = ModelParams(h=h)
        lp = make_lyapunov_params(p, C=32.0, r_star=1000.0)
        for k in range(2):
            lhs = (lp.alpha[k] / lp.eta_star ** lp.alpha[k] * lp.B2[k]
                   - lp.gamt[k] / (p.h + 1.5) * (lp.B3[k] + lp.C3[k]))
            rhs = lp.c2[k] / (2.0 * (p.h + 1.5) * lp.eta_star ** lp.alpha[k])
            assert lhs == pytest.approx(rhs, rel=1e-12)


def test_flux_R2R3_branches_symmetric(good):
    p, lp = good
    rng = np.random.default_rng(7)
    au = np.exp(rng.uniform(np.log(3000.0), np.log(30000.0), 200))
    z = np.full_like(au, 0.6)
    from pairdrift.lyapunov import phi2_bundle, phi3_bundle
    for i in (1, 2):
        up = (phi2_bundle((-au, lp.eta_star / np.sqrt(au), z), lp, i).f2
              - phi3_bundle((-au, lp.eta_star / np.sqrt(au), z), lp, p, i).f2)
        dn = (phi3_bundle((-au, -lp.eta_star / np.sqrt(au), z), lp, p, i).f2
              - phi2_bundle((-au, -lp.eta_star / np.sqrt(au), z), lp, i).f2)
        # phi's are even in v, so the two branch margins coincide exactly
        np.testing.assert_allclose(up, dn, rtol=1e-10)


def test_inner_psi_produces_remainders(good):
    p, lp = good
    rep = check_inner_psi(lp, p, grid(Region.CORE, 4000))
    assert rep.passed
    assert rep.extras["D1"] > 0 and math.isfinite(rep.extras["D1"])
    assert rep.extras["D2"] > 0 and math.isfinite(rep.extras["D2"])


def test_inner_min_term_formula(good):
    p, lp = good
    want = min(lp.m * p.alpha_h / 2.0, (p.kappa1 + p.kappa2) / 4.0)
    assert lp.eps_min(p) == pytest.approx(want, abs=0)


def test_complete_ledger_and_assembled(good):
    p, lp = good
    lp_full = complete_ledger(lp, p, samples=2000, seed=5)
    assert lp_full.completed
    assert lp_full.D == pytest.approx(2.0 * lp_full.c2_rem / lp.eps_min(p))
    want_A = (lp_full.D * p.alpha_h * lp.J / (1 - p.h)
              + lp_full.D * lp_full.D2 + lp_full.c2_rem)
    assert lp_full.A_coef == pytest.approx(want_A)
    rep_L, rep_Q = check_assembled_drift(lp_full, p, grid(Region.CORE, 3000))
    assert rep_L.passed and rep_Q.passed
    assert rep_L.extras["c1"] > 0


def test_assembled_fails_with_D_zero(good):
    """Without the averaging part the z^(-2/3) dissipation claim breaks."""
    p, lp = good
    lp_full = complete_ledger(lp, p, samples=2000, seed=5)
    lp_broken = dataclasses.replace(lp_full, D=0.0, A_coef=0.0)
    rep_L, _ = check_assembled_drift(lp_broken, p, grid(Region.CORE, 3000))
    assert not rep_L.passed
    assert rep_L.worst_margin < 0


def test_report_json_and_reproducibility(good):
    p, lp = good
    rep = check_drift(Region.R1, 2, lp, p, grid(Region.R1))
    d = json.loads(rep.to_json())
    assert d["check_id"] == "drift_R1_i2"
    assert d["ledger_hash"] == lp.ledger_hash()
    rep2 = check_drift(Region.R1, 2, lp, p, grid(Region.R1))
    assert rep2.worst_margin == rep.worst_margin
    assert rep2.worst_point == rep.worst_point
    again = reevaluate_margin(rep.check_id, rep.worst_point, lp, p)
    assert again == pytest.approx(rep.worst_margin,
                                  rel=1e-12, abs=1e-12)


def test_drift_margin_radial_scaling(good):
    """R0 margins grow like r^{p_i + 1} z^{q_i - 2/3} at large radius."""
    p, lp = good
    from pairdrift.verify import _drift_margins
    z = np.array([0.5])
    th = 0.3
    out = []
    for r in (5e3, 5e4):
        pts = (np.array([r * math.cos(th)]), np.array([r * math.sin(th)]), z)
        out.append(float(_drift_margins(Region.R0, 1, pts, lp, p)[0]))
    assert out[1] / out[0] == pytest.approx(10.0 ** (lp.p[0] + 1.0), rel=0.1)


def test_full_suite_and_doubling(good):
    p, lp = good
    r1 = run_full_suite(lp, p, samples=1500, seed=2)
    assert suite_passed(r1)
    r2 = run_full_suite(lp, p, samples=3000, seed=2)
    v1 = {k: r.passed for k, r in r1.items()
          if isinstance(r, VerificationReport)}
    v2 = {k: r.passed for k, r in r2.items()
          if isinstance(r, VerificationReport)}
    assert v1 == v2


def test_search_admissible_monotone_in_r_star():
    lp = search_admissible(0.5, samples=800, seed=4)
    p = ModelParams(h=0.5)
    bigger = make_lyapunov_params(p, C=lp.C, r_star=10.0 * lp.r_star)
    reports = run_full_suite(bigger, p, samples=800, seed=4)
    assert suite_passed(reports)


def test_search_admissible_reports_blocker():
    with pytest.raises((RuntimeError, ValueError)):
        search_admissible(0.5, C_sweep=(2.0,), r_star_sweep=(100.0,),
                          samples=800)


def test_sampler_respects_grid_bounds(good):
    p, lp = good
    rng = np.random.default_rng(0)
    u, v, z = sample_region(Region.R2, lp, 500, rng, z_range=(1e-2, 1.0))
    assert np.all(z >= 1e-2) and np.all(z <= 1.0)
    assert np.all(u < 0)
    from pairdrift.lyapunov import eta_of
    assert np.all(np.abs(eta_of(u, v)) >= lp.eta_star)


def test_full_suite_workers_match_sequential(good):
    p, lp = good
    seq = run_full_suite(lp, p, samples=800, seed=6, with_assembled=False)
    par = run_full_suite(lp, p, samples=800, seed=6, with_assembled=False,
                         workers=2)
    for k, rep in seq.items():
        assert par[k].worst_margin == rep.worst_margin
        assert par[k].worst_point == rep.worst_point

def test_uniform_sampling_variant(good):
    p, lp = good
    from pairdrift.verify import Sampling
    g = GridSpec(Region.R0, samples=1000, sampling=Sampling.UNIFORM, seed=9)
    rep = check_drift(Region.R0, 1, lp, p, g)
    assert rep.passed
    rng = np.random.default_rng(0)
    from pairdrift.verify import sample_region
    u, v, z = sample_region(Region.R0, lp, 4000, rng,
                            sampling=Sampling.UNIFORM)
    r = np.hypot(u, v)
    # uniform radii pile mass at large r, unlike the log law
    assert np.median(r) > 10.0 * lp.r_star
