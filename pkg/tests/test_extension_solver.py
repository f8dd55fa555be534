import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracseg.extension_solver import (DirichletData, Field, GridError, HalfGrid, Reaction,
                                      SolverOptions, SystemParams, assemble_discrete_laplacian,
                                      flat_normal_derivative, laplacian_residual, neumann_residual,
                                      solve_linear_bvp, solve_system)
from fracseg.profiles import classified_pair, subsolution_linear


def _pair_params(beta, k=2):
    return SystemParams(k, beta)


# ---------------------------------------------------------------- grid

def test_uniform_grid_dimensions():
    g = HalfGrid.uniform(1 / 50)
    assert (g.nx, g.ny) == (101, 51)
    assert g.h == pytest.approx(0.02)
    assert g.x[0] == -1 and g.x[-1] == 1 and g.y[-1] == 1


@pytest.mark.parametrize("kw", [dict(nx=2, ny=5), dict(nx=5, ny=2), dict(nx=11, ny=7)])
def test_bad_grids_rejected(kw):
    with pytest.raises(GridError):
        HalfGrid(-1, 1, 1, **kw)


def test_grid_error_is_value_error():
    assert issubclass(GridError, ValueError)


# ---------------------------------------------------------------- operator

def test_operator_symmetric_positive():
    L = assemble_discrete_laplacian(HalfGrid.uniform(1 / 10))
    K = L.K.toarray()
    assert np.allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() > 0


def test_residual_exact_for_quadratic_harmonic(grid50):
    X, Y = grid50.mesh()
    assert np.abs(laplacian_residual(grid50, X**2 - Y**2)).max() < 1e-9
    assert np.abs(laplacian_residual(grid50, 3 + 0 * X)).max() == 0


def test_residual_cubic_is_exact_and_quartic_second_order():
    def res(h):
        g = HalfGrid.uniform(h)
        X, Y = g.mesh()
        # x^4 - 6x^2y^2 + y^4 is harmonic; the 5-point error is (h^2/12)(d4x + d4y) = 4h^2
        return np.abs(laplacian_residual(g, X**4 - 6 * X**2 * Y**2 + Y**4)).max()
    assert res(1 / 20) == pytest.approx(4 / 400, rel=1e-6)
    assert 3.5 <= res(1 / 20) / res(1 / 40) <= 4.5


def test_flat_normal_derivative_linear_in_y(grid50):
    X, Y = grid50.mesh()
    # v = 2 + 3y has -d_y v = -3
    dn = flat_normal_derivative(grid50, 2 + 3 * Y + 0 * X)
    assert np.allclose(dn, -3)


# ---------------------------------------------------------------- linear problems

def test_constant_data_reproduced(grid50):
    v = solve_linear_bvp(grid50, DirichletData.constant(2.5))
    assert np.allclose(v.values, 2.5, atol=1e-12)


def test_even_quadratic_reproduced_exactly(grid50):
    # x^2 - y^2 is even in y, so the ghost-node row is exact for it
    X, Y = grid50.mesh()
    v = solve_linear_bvp(grid50, DirichletData(lambda X, Y: X**2 - Y**2))
    assert np.abs(v.values[0] - (X**2 - Y**2)).max() < 1e-12


def test_neumann_harmonic_second_order():
    def err(h):
        g = HalfGrid.uniform(h)
        X, Y = g.mesh()
        exact = np.cosh(2 * X) * np.cos(2 * Y)
        v = solve_linear_bvp(g, DirichletData(lambda X, Y: np.cosh(2 * X) * np.cos(2 * Y)))
        return np.abs(v.values[0] - exact).max()
    e1, e2 = err(1 / 20), err(1 / 40)
    assert e1 < 1e-2
    assert 3.5 <= e1 / e2 <= 4.5


def test_robin_recovers_subsolution_profile():
    # w = (1 + M y)/(1 + M) satisfies d_nu w + M w = 0
    M = 4.0
    g = HalfGrid.uniform(1 / 40)
    w = subsolution_linear(M)
    v = solve_linear_bvp(g, w.dirichlet(), neumann_coeff=M, neumann_rhs=0.0)
    assert np.abs(v.values[0] - w.sample(g)[0]).max() < 1e-10


def test_robin_solution_dominates_subsolution(grid50):
    M = 10.0
    v = solve_linear_bvp(grid50, DirichletData.constant(1.0), neumann_coeff=M)
    w = subsolution_linear(M).sample(grid50)[0]
    assert np.all(v.values[0] >= w - 1e-12)


def test_negative_robin_coefficient_rejected(grid50):
    with pytest.raises(ValueError):
        solve_linear_bvp(grid50, DirichletData.constant(1.0), neumann_coeff=-1.0)


def test_multicomponent_data_rejected_by_linear_solver(grid50):
    with pytest.raises(ValueError):
        solve_linear_bvp(grid50, DirichletData.constant([1.0, 2.0]))


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_maximum_principle(coef):
    a, b, c, d = coef
    g = HalfGrid.uniform(1 / 16)
    data = DirichletData(lambda X, Y: a + b * np.cos(3 * X) + c * Y * X + d * np.sin(2 * Y))
    v = solve_linear_bvp(g, data).values[0]
    bd = data.sample(g)[0][g.dirichlet_mask()]
    assert v.max() <= bd.max() + 1e-10
    assert v.min() >= bd.min() - 1e-10


# ---------------------------------------------------------------- nonlinear system

def test_single_component_constant_is_fixed_point(grid50):
    f, rep = solve_system(grid50, SystemParams(1, 7.0), DirichletData.constant(1.0))
    assert rep.converged and rep.iterations == 1
    assert np.allclose(f.values, 1.0)


def test_decoupled_system_matches_linear_solves(grid50):
    data = classified_pair(0).dirichlet()
    f, rep = solve_system(grid50, _pair_params(0.0), data)
    assert rep.converged
    samples = data.sample(grid50)
    for i in range(2):
        ref = solve_linear_bvp(grid50, DirichletData(samples=samples[i:i + 1]))
        assert np.abs(f.values[i] - ref.values[0]).max() < 1e-10


def test_classified_pair_is_not_a_beta_zero_solution(grid50):
    # the pair has segregated traces, the decoupled Neumann problem does not
    f, _ = solve_system(grid50, _pair_params(0.0), classified_pair(0).dirichlet())
    assert np.abs(f.values - classified_pair(0).sample(grid50)).max() > 0.05


@pytest.fixture(scope="module")
def beta_sweep(grid50):
    data = classified_pair(0).dirichlet()
    out = {}
    for beta in (10.0, 100.0, 1000.0, 10000.0):
        out[beta] = solve_system(grid50, _pair_params(beta), data)
    return out


def test_large_beta_approaches_classified_pair(beta_sweep, grid50):
    exact = classified_pair(0).sample(grid50)
    errs = [np.abs(f.values - exact).max() for f, _ in beta_sweep.values()]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 0.1


def test_overlap_decreases_with_beta(beta_sweep):
    ov = [np.sum(f.values[0, :, 0] ** 2 * f.values[1, :, 0] ** 2) for f, _ in beta_sweep.values()]
    assert all(b < a for a, b in zip(ov, ov[1:]))


def test_reflection_symmetry(beta_sweep):
    f, _ = beta_sweep[100.0]
    assert np.abs(f.values[0] - f.values[1][::-1]).max() < 1e-8


def test_damped_picard_residual_monotone(beta_sweep):
    for beta, (_, rep) in beta_sweep.items():
        h = np.array(rep.history)
        assert rep.converged, beta
        assert np.all(np.diff(h[1:]) <= 1e-14 + 1e-9 * h[1:-1]), beta


def test_newton_agrees_with_picard(grid50, beta_sweep):
    f, rep = solve_system(grid50, _pair_params(100.0), classified_pair(0).dirichlet(),
                          SolverOptions(damping=1.0, method="newton"))
    assert rep.converged and rep.iterations < 30
    assert np.abs(f.values - beta_sweep[100.0][0].values).max() < 1e-8


def test_warm_start_from_field(grid50, beta_sweep):
    f0, _ = beta_sweep[100.0]
    f, rep = solve_system(grid50, _pair_params(100.0), classified_pair(0).dirichlet(), initial=f0)
    assert rep.iterations <= 3


def test_unconverged_run_is_flagged(grid50):
    _, rep = solve_system(grid50, _pair_params(1e4), classified_pair(0).dirichlet(),
                          SolverOptions(max_iter=2))
    assert not rep.converged and rep.iterations == 2


def test_gross_pitaevskii_reaction_converges(grid50):
    rx = (Reaction.gross_pitaevskii(-1.0, -0.5),) * 2
    f, rep = solve_system(grid50, SystemParams(2, 50.0, rx), classified_pair(0).dirichlet())
    assert rep.converged
    res = neumann_residual(f, SystemParams(2, 50.0, rx))
    assert res["max"] < 0.5


def test_component_count_mismatch(grid50):
    with pytest.raises(ValueError):
        solve_system(grid50, SystemParams(3, 1.0), classified_pair(0).dirichlet())


@pytest.mark.parametrize("kw", [dict(damping=0.0), dict(damping=1.5), dict(max_iter=0), dict(method="x")])
def test_bad_options(kw):
    with pytest.raises(ValueError):
        SolverOptions(**kw)


def test_params_validation():
    with pytest.raises(ValueError):
        SystemParams(2, -1.0)
    with pytest.raises(ValueError):
        SystemParams(2, 1.0, interaction=np.array([[0, 1], [2, 0]]))
    p = SystemParams(2, 1.0, interaction=np.array([[5.0, 2.0], [2.0, 5.0]]))
    assert p.interaction[0, 0] == 0 and p.interaction[0, 1] == 2


def test_field_rejects_nan(grid50):
    vals = np.zeros((1, grid50.nx, grid50.ny))
    vals[0, 3, 3] = np.nan
    with pytest.raises(ValueError):
        Field(grid50, vals)


# ---------------------------------------------------------------- independent residual

def test_neumann_residual_vanishes_on_linear_profile(grid50):
    M = 3.0
    w = subsolution_linear(M).field(grid50)
    p = SystemParams(1, 0.0, (Reaction.linear(-M),))
    assert neumann_residual(w, p)["max"] < 1e-12


def test_neumann_residual_second_order_on_pair_positivity_set():
    def res(h):
        g = HalfGrid.uniform(h)
        f = classified_pair(0).field(g)
        r = neumann_residual(f, SystemParams(2, 0.0))["residual"][0]
        sel = (g.x[1:-1] >= 0.2) & (g.x[1:-1] <= 0.8)
        return np.abs(r[sel]).max()
    assert res(1 / 50) / res(1 / 100) >= 3.5


@pytest.mark.parametrize("omega,lam", [(1.0, 0.0), (-2.0, 3.0)])
def test_reaction_primitive(omega, lam):
    r = Reaction.gross_pitaevskii(omega, lam)
    s = np.linspace(-2, 2, 41)
    assert r.F(np.zeros(1))[0] == 0
    eps = 1e-6
    assert np.allclose((r.F(s + eps) - r.F(s - eps)) / (2 * eps), r.f(s), atol=1e-6)
    assert np.allclose(r.derivative(s), 3 * omega * s**2 + lam)
