import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracseg.extension_solver import (DirichletData, Field, HalfGrid, Reaction, SolverOptions,
                                      SystemParams, solve_system)
from fracseg.monotonicity import (SCAN_COLUMNS, CenterError, CylinderSpec, Kernel, SegregationWarning,
                                  SyntheticProfile, acf_boundary, acf_perturbed, acf_segregated,
                                  almgren_coexistence, almgren_limiting, almgren_segregated,
                                  check_nondecreasing, kernel_regularity_gap, log_derivative_gap,
                                  monotone_from, morrey_phi, morrey_sup, pohozaev_residual_cylinder,
                                  pohozaev_residual_sphere, radial_scan, relative_dips)
from fracseg.profiles import classified_pair, constant, linear_y, polynomial_pair, sqrt_extension

R = np.array([0.2, 0.35, 0.5, 0.65, 0.8])
P0 = SystemParams(2, 0.0)


@pytest.fixture(scope="module")
def grid100():
    return HalfGrid.uniform(1 / 100)


@pytest.fixture(scope="module")
def pair_field(grid100):
    return classified_pair(0).field(grid100)


# ---------------------------------------------------------------- kernel

@pytest.mark.parametrize("N", [1, 2, 3, 4, 5])
def test_kernel_is_c1_at_unit_sphere(N):
    jump, djump = kernel_regularity_gap(N)
    assert jump < 1e-7 and djump < 1e-7


def test_kernel_is_one_in_the_plane():
    s = np.linspace(0, 3, 31)
    assert np.all(Kernel(1, 0.1)(s) == 1) and np.all(Kernel(1, 0.0)(s) == 1)


@settings(max_examples=40, deadline=None)
@given(s=st.floats(0.05, 3.0), e1=st.floats(0.01, 1.0), e2=st.floats(0.01, 1.0))
def test_mollified_kernel_increases_to_fundamental_solution(s, e1, e2):
    lo, hi = sorted((e1, e2))
    k_small, k_big = Kernel(3, lo)(s), Kernel(3, hi)(s)
    exact = Kernel(3, 0.0)(s)
    assert k_big <= k_small * (1 + 1e-12)
    assert k_small <= exact * (1 + 1e-12) + 1e-15


def test_kernel_validation():
    with pytest.raises(ValueError):
        Kernel(0)
    with pytest.raises(ValueError):
        Kernel(2, -1.0)


# ---------------------------------------------------------------- ACF

def test_acf_boundary_exact_profile():
    res = acf_boundary(sqrt_extension(), R)
    assert np.allclose(res.phi, math.pi / 4, rtol=1e-6)
    assert res.monotone_from == R[0]


def test_acf_boundary_warns_on_nonvanishing_trace():
    with pytest.warns(SegregationWarning):
        acf_boundary(linear_y(1.0, with_constant=1.0), R)


def test_acf_segregated_pair_constant(pair_field):
    res = acf_segregated(classified_pair(0), 0.0, R, nu=0.5)
    assert np.allclose(res.phi, (math.pi / 4) ** 2, rtol=1e-6)
    grid = acf_segregated(pair_field, 0.0, R, nu=0.5)
    assert np.allclose(grid.phi, (math.pi / 4) ** 2, rtol=0.02)


def test_acf_segregated_default_exponent_is_one_half():
    assert acf_segregated(classified_pair(0), 0.0, R).exponent == pytest.approx(0.5)


def test_acf_segregated_warns_on_overlap():
    with pytest.warns(SegregationWarning):
        acf_segregated(constant([1.0, 1.0]), 0.0, R, nu=0.5)


def test_acf_perturbed_increasing_for_pair():
    res = acf_perturbed(classified_pair(0), 0.0, R, nu_prime=0.45)
    assert np.all(np.diff(res.phi) > 0)
    # r^{2(1/2 - nu')} growth of each factor
    assert res.phi[-1] / res.phi[0] == pytest.approx((R[-1] / R[0]) ** (4 * 0.05), rel=1e-6)


def test_acf_perturbed_rejects_exponent_at_threshold():
    with pytest.raises(ValueError):
        acf_perturbed(classified_pair(0), 0.0, R, nu_prime=0.5)


def test_acf_perturbed_beta_scales_interaction_only():
    a = acf_perturbed(constant([1.0, 1.0]), 0.0, R, beta=1.0)
    b = acf_perturbed(constant([1.0, 1.0]), 0.0, R, beta=3.0)
    # gradients vanish, so each factor is beta * 2r * r^{-2 nu'}
    assert np.allclose(b.phi / a.phi, 9.0)


def test_acf_r_bar_note():
    res = acf_perturbed(classified_pair(0), 0.0, R, r_bar=0.5)
    assert list(res.notes["beyond_r_bar"]) == [False, False, False, True, True]


# ---------------------------------------------------------------- Almgren

def test_almgren_pair_exact():
    res = almgren_segregated(classified_pair(0), 0.0, R)
    assert np.allclose(res.N, 0.5, atol=1e-8)
    assert np.allclose(res.H, math.pi * R, rtol=1e-8)


@pytest.mark.parametrize("k", [1, 2])
def test_almgren_higher_modes(k):
    res = almgren_segregated(classified_pair(k), 0.0, R)
    assert np.allclose(res.N, 0.5 + k, atol=1e-8)


def test_almgren_linear_profile():
    assert np.allclose(almgren_segregated(linear_y(), 0.0, R).N, 1.0, atol=1e-8)


def test_almgren_coexistence_constant_pair():
    c = 0.7
    p = SystemParams(2, 1.0)
    res = almgren_coexistence(constant([c, c]), p, 0.0, R)
    assert np.allclose(res.E, 2 * R * c**4, rtol=1e-10)
    assert np.allclose(res.extras["gradient_energy"], 0, atol=1e-14)


def test_almgren_undefined_when_height_vanishes():
    res = almgren_segregated(constant([0.0, 0.0]), 0.0, R)
    assert np.all(np.isnan(res.N))


def test_log_derivative_identity_on_pair():
    res = almgren_segregated(classified_pair(0), 0.0, np.linspace(0.2, 0.8, 13))
    gap = log_derivative_gap(res.radii, res.H, res.N)
    # d/dr log H = 2N/r; what is left is the finite-difference error in r
    scale = res.N[:-1] / res.radii[:-1] + res.N[1:] / res.radii[1:]
    assert np.abs(gap / scale).max() < 0.01


def test_almgren_limiting_adds_one():
    res = almgren_limiting(classified_pair(0), P0, 0.0, R)
    assert np.allclose(res.N, 1.5, atol=1e-8)
    assert res.extras["p"] == 3.0


def test_almgren_limiting_warns_off_zero_set(pair_field):
    with pytest.warns(SegregationWarning):
        almgren_limiting(pair_field, P0, 0.5, [0.1, 0.2, 0.3])


def test_almgren_limiting_compensated_monotone_for_reaction():
    g = HalfGrid.uniform(1 / 100)
    rx = (Reaction.gross_pitaevskii(-1.0, 1.0),) * 2
    p = SystemParams(2, 1e4, rx)
    f, rep = solve_system(g, p, classified_pair(0).dirichlet())
    assert rep.converged
    r = np.linspace(0.1, 0.5, 9)
    with warnings.catch_warnings():
        # at this beta the interface trace still sits above the zero-set tolerance
        warnings.simplefilter("ignore", SegregationWarning)
        res = almgren_limiting(f, SystemParams(2, 0.0, rx), 0.0, r)
    ok, at, worst = check_nondecreasing(r, res.extras["compensated"], 1e-3)
    assert ok, (at, worst)


# ---------------------------------------------------------------- Pohozaev

def test_pohozaev_sphere_exact_profile():
    for x0 in (0.0, 0.3, -0.3):
        res = pohozaev_residual_sphere(classified_pair(0), P0, x0, [0.1, 0.2, 0.4, 0.6])
        assert np.abs(res.residual).max() < 1e-8


@pytest.mark.parametrize("x0,r", [(1.0, 1.2), (-1.0, 1.2), (0.3, 0.6)])
def test_pohozaev_detects_unbalanced_coefficients(x0, r):
    # the half-ball must contain the pole; otherwise each component balances alone
    for d in (1.0, -1.0):
        assert abs(pohozaev_residual_sphere(classified_pair(0, d=d), P0, x0, [r]).residual[0]) < 1e-8
    for d in (2.0, 0.5):
        assert abs(pohozaev_residual_sphere(classified_pair(0, d=d), P0, x0, [r]).residual[0]) > 0.1


def test_pohozaev_balls_missing_the_pole_are_blind_to_coefficients():
    res = pohozaev_residual_sphere(classified_pair(0, d=2.0), P0, 0.5, [0.4])
    assert abs(res.residual[0]) < 1e-8


def test_pohozaev_residual_decays_on_grid():
    errs = []
    for h in (1 / 50, 1 / 100):
        f = classified_pair(0).field(HalfGrid.uniform(h))
        errs.append(np.abs(pohozaev_residual_sphere(f, P0, 0.3, [0.2, 0.4]).residual).max())
    assert errs[0] / errs[1] >= 1.8


def test_pohozaev_solved_reaction_field_refines():
    rx = (Reaction.gross_pitaevskii(-1.0, 0.5),) * 2
    p = SystemParams(2, 100.0, rx)
    out = []
    for h in (1 / 50, 1 / 100):
        f, _ = solve_system(HalfGrid.uniform(h), p, classified_pair(0).dirichlet(),
                            SolverOptions(method="newton", damping=1.0))
        out.append(np.abs(pohozaev_residual_sphere(f, p, 0.0, [0.3, 0.6]).residual).max())
    assert out[1] < out[0]


def test_cylinder_h_equals_n_matches_sphere():
    spec = CylinderSpec(1, 0.4, 1.0, (0.3,))
    a = pohozaev_residual_cylinder(classified_pair(0), P0, spec)
    b = pohozaev_residual_sphere(classified_pair(0), P0, 0.3, [0.4])
    assert a.residual == pytest.approx(b.residual)


def test_cylinder_lifted_pair_converges():
    syn = SyntheticProfile.lift(classified_pair(0), 2)
    assert abs(pohozaev_residual_cylinder(syn, P0, CylinderSpec(1, 0.4, 0.3, (0.1, 0.0))).residual[0]) < 1e-8
    # with h = 2 the singular line crosses the half-ball and the quadrature converges like 1/n
    res = [abs(pohozaev_residual_cylinder(syn, P0, CylinderSpec(2, 0.4, 0.3, (0.0, 0.0)), n=n).residual[0])
           for n in (8, 16)]
    assert res[1] < 1e-3 and res[0] / res[1] > 1.8


def test_cylinder_lifted_smooth_profiles():
    for p in (linear_y(), polynomial_pair(2)):
        syn = SyntheticProfile.lift(p, 2)
        for h in (1, 2):
            res = pohozaev_residual_cylinder(syn, P0 if p.k == 2 else SystemParams(1, 0.0),
                                             CylinderSpec(h, 0.4, 0.3, (0.1, 0.0)))
            assert abs(res.residual[0]) < 1e-8, (p.kind, h)


def test_cylinder_validation():
    with pytest.raises(ValueError):
        CylinderSpec(3, 0.4, 1.0, (0.0, 0.0))
    with pytest.raises(ValueError):
        pohozaev_residual_cylinder(classified_pair(0), P0, CylinderSpec(1, 0.4, 1.0, (0.0, 0.0)))


# ---------------------------------------------------------------- Morrey

def test_morrey_flat_centre_pair():
    res = morrey_phi(classified_pair(0), (0.0, 0.0), R)
    # |grad v|^2 + |grad w|^2 = 1/(2 rho); integral over B_r^+ is pi r / 2
    assert np.allclose(res.phi, math.pi / 2, rtol=1e-6)


def test_morrey_interior_centre_bounded():
    best, centre, radius = morrey_sup(classified_pair(0), [(0.0, 0.0), (0.2, 0.3), (-0.3, 0.1)],
                                      [0.05, 0.1, 0.2])
    assert 0 < best <= math.pi / 2 + 1e-6


def test_morrey_rejects_lower_half_plane():
    with pytest.raises(CenterError):
        morrey_phi(classified_pair(0), (0.0, -0.1), R)


# ---------------------------------------------------------------- input checks

def test_centre_outside_grid(pair_field):
    with pytest.raises(ValueError):
        almgren_segregated(pair_field, 1.5, [0.1])


def test_radius_leaving_grid(pair_field):
    with pytest.raises(ValueError):
        almgren_segregated(pair_field, 0.5, [0.2, 0.6])


def test_radii_must_increase():
    with pytest.raises(ValueError):
        almgren_segregated(classified_pair(0), 0.0, [0.3, 0.2])


# ---------------------------------------------------------------- invariances

@settings(max_examples=5, deadline=None)
@given(c=st.floats(0.1, 10.0), x0=st.floats(-0.3, 0.3))
def test_frequency_invariant_under_scaling(c, x0):
    a = almgren_segregated(classified_pair(0, c=c), x0, [0.1, 0.3]).N
    b = almgren_segregated(classified_pair(0), x0, [0.1, 0.3]).N
    assert np.allclose(a, b, rtol=1e-10)


@settings(max_examples=5, deadline=None)
@given(c=st.floats(0.1, 10.0))
def test_acf_boundary_quadratic_in_amplitude(c):
    def scaled_sqrt(x, y):
        return c * sqrt_extension().value(x, y)

    def scaled_grad(x, y):
        return c * sqrt_extension().gradient(x, y)
    from fracseg.profiles import Profile
    p = Profile("scaled", {}, scaled_sqrt, scaled_grad, singular_points=((0.0, 0.0),))
    assert np.allclose(acf_boundary(p, R).phi, c * c * math.pi / 4, rtol=1e-6)


# ---------------------------------------------------------------- monotonicity helpers

def test_relative_dips_and_checks():
    q = [1.0, 1.1, 1.09, 1.2, 1.3]
    d = relative_dips(q)
    assert d[1] == pytest.approx(0.01 / 1.1) and d[0] == 0
    ok, at, worst = check_nondecreasing([1, 2, 3, 4, 5], q, 1e-3)
    assert not ok and at == 3 and worst == pytest.approx(0.01 / 1.1)
    assert check_nondecreasing([1, 2, 3, 4, 5], q, 0.02)[0]
    assert monotone_from([1, 2, 3, 4, 5], q) == 3


# ---------------------------------------------------------------- scans

def test_radial_scan_columns(pair_field, tmp_path):
    scan = radial_scan(pair_field, P0, 0.0, R)
    assert set(scan.records) | {"r"} == set(SCAN_COLUMNS)
    assert np.allclose(scan.column("N"), 0.5, atol=0.02)
    out = tmp_path / "scan.csv"
    scan.write_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0].split(",") == list(SCAN_COLUMNS) and len(lines) == R.size + 1


def test_radial_scan_single_component(grid100):
    f = Field(grid100, linear_y().sample(grid100)[:1] + 1.0)
    scan = radial_scan(f, SystemParams(1, 0.0), 0.0, R)
    assert np.all(np.isnan(scan.column("Phi_seg")))
