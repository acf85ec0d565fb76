import math

import numpy as np
import pytest

from biharmonic_ac import CONSTANT, DIRICHLET, FREE_BOUNDARY, NAVIER, DomainError, radial
from biharmonic_ac import diagnostics as dg
from biharmonic_ac import minimiser as mn

SQ3 = math.sqrt(3.0)


# --- energy bounds -------------------------------------------------------------------

def test_navier_bound_equality_for_harmonic_candidate():
    rep = dg.navier_upper_bound(math.pi, math.pi)
    assert rep.status == dg.PASS and rep.relation == "<="
    assert rep.details["flat_set_forced"] is False


def test_navier_bound_flags_dichotomy():
    inf = radial.infimum_navier2d(0.05)
    rep = dg.navier_upper_bound(inf.energy.total, math.pi)
    assert rep.passed and rep.details["flat_set_forced"]


def test_navier_bound_violation():
    rep = dg.navier_upper_bound(math.pi + 0.1, math.pi)
    assert rep.status == dg.FAIL and not rep.passed
    with pytest.raises(DomainError):
        dg.navier_upper_bound(-1.0, 1.0)


def test_dirichlet_bound():
    assert dg.dirichlet_lower_bound(0.0, math.pi, 0.0).status == dg.PASS
    inf = radial.infimum_dirichlet2d(0.03)
    rep = dg.dirichlet_lower_bound(0.0, math.pi, inf.energy.total)
    assert rep.passed and rep.lhs == inf.energy.total and rep.rhs == 0.0
    # flux 2 pi k on the unit circle
    k = 0.3
    bound = dg.distance_datum_bound(k, 2 * math.pi, math.pi)
    assert bound == pytest.approx(4 * math.pi * k**2, rel=1e-15)
    rep = dg.dirichlet_lower_bound(2 * math.pi * k, math.pi, bound * 0.99)
    assert rep.status == dg.FAIL
    with pytest.raises(DomainError):
        dg.dirichlet_lower_bound(1.0, 0.0, 1.0)


# --- flat-set bound ---------------------------------------------------------------------

def template_constant_exact():
    # Lap v1 = (6 - 18 t^2) / (1 + t) with t = r - 1 in two dimensions
    num = np.polymul([-18.0, 0.0, 6.0], [-18.0, 0.0, 6.0])
    q, rem = np.polydiv(num, [1.0, 1.0])
    return 2 * math.pi * (np.polyval(np.polyint(q), 1.0) + rem[-1] * math.log(2.0))


def test_template_constant_matches_exact_integral():
    assert dg.smoothstep_template_constant() == pytest.approx(template_constant_exact(), rel=1e-12)
    assert dg.smoothstep_template_constant(2, 0.5) == pytest.approx(template_constant_exact() / 4, rel=1e-12)


def test_template_meets_data():
    r = np.array([0.0, 0.5, 1.0, 2.0, 2.5])
    np.testing.assert_allclose(dg.smoothstep_template(r, 0.7), [0, 0, 0, 0.7, 0.7])
    h = 1e-6
    slope = (dg.smoothstep_template(2.0) - dg.smoothstep_template(2.0 - h)) / h
    assert abs(slope) < 1e-5


def test_flat_bound_vacuous_at_threshold():
    c1 = dg.smoothstep_template_constant()
    R = (c1 / math.pi) ** 0.25
    rep = dg.flat_set_lower_bound(R * (1 - 1e-12), c1, 2)
    assert rep.rhs == 0.0 and rep.details["vacuous"] and rep.status == dg.NOT_APPLICABLE
    assert rep.details["threshold_R"] == pytest.approx(R)


def test_flat_bound_scaling():
    c1, n = 50.0, 2
    for R in (2.5, 3.0, 7.0):
        en = math.pi
        b1 = dg.flat_set_lower_bound(R, c1, n).rhs
        b2 = dg.flat_set_lower_bound(2 * R, c1, n).rhs
        assert b2 / b1 == pytest.approx((en * 16 * R**4 - c1) / (en * R**4 - c1) * 2.0 ** (n - 4), rel=1e-12)


@pytest.mark.parametrize("R", [3.0, 5.0])
def test_flat_bound_holds_for_radial_minimiser(R):
    # Omega = B_2, so Omega_R = B_{2R}; data u0 = 1 matches the template
    c1 = dg.smoothstep_template_constant()
    rep = radial.rescale_to_ball(2 * R, 1.0, DIRICHLET)
    assert rep.decision == FREE_BOUNDARY
    measured = math.pi * rep.rho_opt**2
    out = dg.flat_set_lower_bound(R, c1, 2, measured=measured)
    assert out.status == dg.PASS and out.rhs > 0


def test_flat_bound_fails_on_small_measure():
    assert dg.flat_set_lower_bound(5.0, 10.0, 2, measured=0.0).status == dg.FAIL


# --- Stampacchia ------------------------------------------------------------------------

def exact_1d(R=3.0, m=4096):
    geo = mn.Interval(R, m)
    return mn.GridFunction(geo, radial.eval_1d(R, R - SQ3, geo.nodes), NAVIER, 1.0)


def test_stampacchia_exact_1d():
    u = exact_1d()
    rep = dg.stampacchia_check(u, 1e-12)
    assert rep.status == dg.PASS and rep.lhs == 0.0
    # examined nodes lie in (-rho + 2h, rho - 2h)
    assert rep.details["interior_nodes"] <= 2 * (3 - SQ3) / u.h


def test_stampacchia_corrupted():
    u = exact_1d()
    v = u.values.copy()
    v[2048] = -u.h**2 / 2   # still inside the flat set but with u'' = 1 there
    rep = dg.stampacchia_check(u.with_values(v), 1e-5)
    assert rep.status == dg.FAIL and rep.lhs == pytest.approx(1.0)


def test_stampacchia_not_applicable():
    geo = mn.Interval(2.0, 64)
    assert dg.stampacchia_check(mn.GridFunction.constant(geo, NAVIER, 1.0), 1e-6).status == dg.NOT_APPLICABLE
    with pytest.raises(DomainError):
        dg.stampacchia_check(mn.GridFunction.constant(geo, NAVIER, 1.0), 0.0)


def test_stampacchia_exact_disk_candidates():
    for rep, bc in ((radial.infimum_navier2d(0.05), NAVIER), (radial.infimum_dirichlet2d(0.03), DIRICHLET)):
        geo = mn.RadialDisk(2, 1.0, 2048)
        u = mn.GridFunction.sample(geo, bc, rep.candidate.u0, rep.candidate.value)
        assert dg.stampacchia_check(u, 1e-8 * rep.candidate.u0).status == dg.PASS


# --- Laplacian jump -------------------------------------------------------------------------

def test_jump_navier():
    c = radial.infimum_navier2d(0.05).candidate
    rep = dg.laplacian_jump(c)
    assert rep.status == dg.PASS and rep.lhs > 0
    assert c.laplacian_outside(1.0) == 0.0
    assert rep.details["laplacian_at_boundary"] == 0.0


def test_jump_constant_not_applicable():
    rep = dg.laplacian_jump(radial.constant_candidate(2, 1.0, 0.1))
    assert rep.status == dg.NOT_APPLICABLE and rep.passed
    assert dg.sign_change_certificate(radial.constant_candidate(2, 1.0, 0.1)).status == dg.NOT_APPLICABLE


def test_jump_and_sign_change_dirichlet():
    rng = np.random.default_rng(5)
    for u0, rho in zip(rng.uniform(1e-3, 1.0, 200), rng.uniform(0.02, 0.98, 200)):
        c = radial.dirichlet2d_coefficients(u0, rho)
        assert dg.sign_change_certificate(c).status == dg.PASS
        assert dg.laplacian_jump(c).status == dg.PASS


def test_jump_every_radial_minimiser():
    for u0 in np.linspace(0.005, 0.07, 14):
        rep = radial.infimum_navier2d(float(u0))
        if rep.decision == FREE_BOUNDARY:
            assert dg.laplacian_jump(rep.candidate).status == dg.PASS


# --- mean oscillation -------------------------------------------------------------------------

def test_bmo_trivial_cases():
    geo = mn.RadialDisk(2, 1.0, 512)
    const = mn.GridFunction.constant(geo, NAVIER, 0.3)
    assert all(v < 1e-20 for _, v in dg.bmo_profile(const, [0.01, 0.05, 0.1]))
    quad = mn.GridFunction.sample(geo, DIRICHLET, 1.0, lambda r: r**2)
    prof = dg.bmo_profile(quad, [0.01, 0.05, 0.1])
    assert len(prof) == 3 and all(v < 1e-12 for _, v in prof)
    geo1 = mn.Interval(2.0, 256)
    line = mn.GridFunction(geo1, geo1.nodes**2, DIRICHLET, 4.0)
    assert all(v < 1e-12 for _, v in dg.bmo_profile(line, [0.1, 0.3]))


def test_bmo_skips_inadmissible_radii():
    geo = mn.RadialDisk(2, 1.0, 128)
    u = mn.GridFunction.constant(geo, NAVIER, 1.0)
    assert dg.bmo_profile(u, [0.5, 1.0]) == []
    with pytest.raises(DomainError):
        dg.bmo_profile(u, [-0.1])
    with pytest.raises(DomainError):
        dg.bmo_profile(mn.GridFunction.constant(mn.RadialDisk(3, 1.0, 64), NAVIER, 1.0), [0.1])


def test_bmo_navier_minimiser_bounded():
    c = radial.infimum_navier2d(0.05).candidate
    geo = mn.RadialDisk(2, 1.0, 2048)
    u = mn.GridFunction.sample(geo, NAVIER, 0.05, c.value)
    radii = np.geomspace(8 * geo.h, 0.1, 8)
    prof = dg.bmo_profile(u, radii)
    vals = np.array([v for _, v in prof])
    assert len(prof) == 8 and np.all(np.isfinite(vals))
    # no blow-up as r shrinks: small radii stay below the largest-radius value times a modest factor
    assert vals.max() < 10 * vals[-1]


# --- monotonicity ---------------------------------------------------------------------------------

def test_monotonicity_grid():
    grid = np.linspace(0.01, 0.2, 20)
    rep = dg.infimum_monotonicity(grid)
    assert rep.status == dg.PASS
    e = np.array(rep.details["energy"])
    assert np.all(np.diff(e) >= 0)
    tail = [x for z, x, d in zip(grid, e, rep.details["decision"]) if z >= 0.15]
    assert all(abs(x - math.pi) <= 1e-12 for x in tail)
    assert CONSTANT in rep.details["decision"] and FREE_BOUNDARY in rep.details["decision"]


def test_monotonicity_single_point_and_validation():
    assert dg.infimum_monotonicity([0.05]).status == dg.PASS
    with pytest.raises(DomainError):
        dg.infimum_monotonicity([0.05, 0.01])
    with pytest.raises(DomainError):
        dg.infimum_monotonicity([])


def test_monotonicity_with_lambda():
    rep = dg.infimum_monotonicity(np.linspace(0.02, 0.4, 12), lam=4.0)
    assert rep.status == dg.PASS


def test_reports_are_deterministic():
    a = dg.infimum_monotonicity([0.02, 0.05, 0.1])
    b = dg.infimum_monotonicity([0.02, 0.05, 0.1])
    assert a.to_dict() == b.to_dict()
