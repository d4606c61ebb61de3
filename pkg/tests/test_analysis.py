"""Intrinsic cylinders, iteration ladders, algebraic lemmas, modulus fitting."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlstefan import (
    Cylinder,
    EmptyCylinderError,
    InsufficientSamplesError,
    InvalidParamsError,
    IterationParams,
    KernelSpec,
    LatticeProblem,
    NonpositiveExcessError,
    Trajectory,
    boundary_sequences,
    fit_log_modulus,
    geometric_convergence,
    initial_sequences,
    interior_sequences,
    intrinsic_theta,
    lemma_iter_epsilon,
    lemma_iter_verify,
    level_set_fraction,
    measure_density,
    modulus_ladder,
    oscillation,
    oscillation_scale,
    sequence_tail_report,
)
from nlstefan.lattice import Grid
from nlstefan.presets import const1d, melt1d
from nlstefan.solver import solve


def static_traj(values, dirichlet, lo=-1.0, hi=1.0, far=0.0):
    """One-snapshot trajectory wrapping a hand-built field."""
    n = len(values)
    spacing = (hi - lo) / (n - 1)
    grid = Grid(spacing=spacing, shape=(n,), origin=(lo,), r_infinity=8.0)
    x = grid.coordinates()[:, 0]
    mask = (x > lo + 1e-12) & (x < hi - 1e-12)
    problem = LatticeProblem(
        s=0.5, p=3.0, kernel=KernelSpec(), grid=grid, unknown_mask=mask,
        dirichlet=dirichlet, far_value=far, initial=np.asarray(values, dtype=float),
        horizon=1.0, eps=0.05)
    return Trajectory(problem=problem, times=[0.0],
                      states=[np.asarray(values, dtype=float)], diagnostics=[])


# ---------------------------------------------------------------- cylinders


def test_intrinsic_theta_values():
    assert intrinsic_theta(1.0, 3.0) == 4.0
    assert intrinsic_theta(1.0, 3.0, boundary=True) == 16.0
    assert intrinsic_theta(4.0, 3.0) == 1.0
    assert intrinsic_theta(4.0, 5.0, boundary=True) == 1.0


def test_cylinder_geometry():
    cyl = Cylinder(x0=(0.0,), t0=2.0, rho=0.5, theta=4.0)
    sp = 1.5
    assert cyl.depth(sp) == 4.0 * 0.5 ** 1.5
    lo, hi = cyl.window(sp)
    assert hi == 2.0 and lo == 2.0 - cyl.depth(sp)
    half = cyl.shrink(0.5)
    assert half.rho == 0.25 and half.theta == 4.0
    with pytest.raises(InvalidParamsError):
        Cylinder(x0=(0.0,), t0=0.0, rho=0.0, theta=1.0)
    with pytest.raises(InvalidParamsError):
        Cylinder(x0=(0.0,), t0=0.0, rho=0.1, theta=-1.0)


def test_oscillation_constant_field_is_zero():
    traj = static_traj(np.full(17, 0.4), lambda x, t: np.full(np.atleast_2d(x).shape[0], 0.4))
    assert oscillation(traj, Cylinder((0.0,), 0.0, 0.5, 1.0)) == 0.0


def test_oscillation_linear_field():
    # u = x over the closed ball of radius 4h: sup - inf = 8h exactly
    n = 17
    traj = static_traj(np.linspace(-1.0, 1.0, n), lambda x, t: np.atleast_2d(x)[:, 0])
    h = traj.problem.grid.spacing
    assert oscillation(traj, Cylinder((0.0,), 0.0, 4 * h, 1.0)) == 8 * h
    # nested cylinders give nondecreasing oscillation
    small = oscillation(traj, Cylinder((0.0,), 0.0, 2 * h, 1.0))
    assert small <= 8 * h


def test_oscillation_empty_cylinder():
    traj = static_traj(np.zeros(9), lambda x, t: np.zeros(np.atleast_2d(x).shape[0]))
    with pytest.raises(EmptyCylinderError):
        oscillation(traj, Cylinder((50.0,), 0.0, 0.01, 1.0))
    with pytest.raises(EmptyCylinderError):
        oscillation(traj, Cylinder((0.0,), -5.0, 0.5, 1.0))


def test_level_set_fractions():
    vals = np.concatenate([np.full(4, -1.0), np.full(4, 1.0)])
    traj = static_traj(vals, lambda x, t: np.where(np.atleast_2d(x)[:, 0] > -0.05, 1.0, -1.0),
                       lo=-1.0, hi=0.75, far=1.0)
    cyl = Cylinder((-0.125,), 0.0, 2.0, 1.0)
    below = level_set_fraction(traj, cyl, "below", 0.0)
    above = level_set_fraction(traj, cyl, "above", 0.0)
    assert below == 0.5 and above == 0.5
    assert below + above == 1.0
    assert level_set_fraction(traj, cyl, "below", 2.0) == 1.0
    assert level_set_fraction(traj, cyl, "above", 2.0) == 0.0
    with pytest.raises(InvalidParamsError, match="side"):
        level_set_fraction(traj, cyl, "inside", 0.0)


def test_level_set_fractions_are_complementary_on_the_melt(small_melt_traj):
    pre, traj = small_melt_traj
    cyl = Cylinder((0.0,), pre.problem.horizon, 0.4, 1.0)
    for level in (-0.5, 0.0, 0.5):
        below = level_set_fraction(traj, cyl, "below", level)
        above = level_set_fraction(traj, cyl, "above", level)
        assert below + above == pytest.approx(1.0, abs=1e-15)


# ---------------------------------------------------------------- ladders


def test_iteration_params_validation():
    with pytest.raises(InvalidParamsError, match="m1 must be at least 4"):
        IterationParams(s=0.5, p=3.0, eps=0.01, omega0=1.0, rho0=1.0, m1=3.0)
    with pytest.raises(InvalidParamsError, match="positive"):
        IterationParams(s=0.5, p=3.0, eps=0.0, omega0=1.0, rho0=1.0)
    with pytest.raises(InvalidParamsError, match="exponents"):
        IterationParams(s=1.5, p=3.0, eps=0.01, omega0=1.0, rho0=1.0)
    params = IterationParams(s=0.5, p=3.0, eps=0.01, omega0=1.0, rho0=1.0)
    assert params.m == 0.875
    steep = IterationParams(s=0.05, p=3.0, eps=0.01, omega0=1.0, rho0=1.0)
    assert steep.m == 2.0 ** -0.05


def test_interior_ladder_first_steps():
    params = IterationParams(s=0.5, p=3.0, eps=0.01, omega0=1.0, rho0=1.0)
    levels = interior_sequences(params)
    assert levels[0].rho == 1.0 and levels[0].omega == 1.0
    assert levels[0].theta == 4.0
    # f1 = 1/n1, f2 = 1 - 1/n2 at omega = omega0
    assert levels[1].rho == 0.25
    assert levels[1].omega == 0.875
    wide = IterationParams(s=0.5, p=3.0, eps=0.01, omega0=1.0, rho0=1.0, n1=16.0)
    assert interior_sequences(wide)[1].rho == 0.0625


def test_interior_ladder_invariants():
    params = IterationParams(s=0.5, p=3.0, eps=0.01, omega0=1.0, rho0=1.0)
    levels = interior_sequences(params, n_levels=30)
    omegas = np.array([l.omega for l in levels])
    rhos = np.array([l.rho for l in levels])
    assert np.all(np.diff(omegas) < 0.0)
    assert np.all(np.diff(rhos) < 0.0)
    idx = np.arange(len(levels))
    # attrition floor: omega_i >= omega0 2^{-s i} and >= 4 eps
    assert np.all(omegas >= 2.0 ** (-0.5 * idx) - 1e-15)
    assert np.all(omegas >= 4.0 * params.eps)


def test_interior_ladder_stabilizes_at_the_floor():
    params = IterationParams(s=0.5, p=3.0, eps=0.2, omega0=1.0, rho0=1.0)
    levels = interior_sequences(params)
    assert [l.stabilized for l in levels] == [False, False, False, True]
    assert levels[-1].omega == 0.8


def test_boundary_ladder_matches_interior_for_flat_datum():
    params = IterationParams(s=0.5, p=3.0, eps=0.01, omega0=1.0, rho0=1.0)
    inner = interior_sequences(params, n_levels=10)
    outer = boundary_sequences(params, lambda cyl: 0.0, n_levels=10)
    assert outer[0].theta == 16.0
    # with omega0 = 1 and flat datum the oscillation recursions coincide
    for a, b in zip(inner, outer):
        assert b.omega == a.omega
    # radius factor carries the extra 1/n0
    assert outer[1].rho == inner[1].rho / 4.0


def test_boundary_ladder_datum_dominant_branch():
    params = IterationParams(s=0.5, p=3.0, eps=0.01, omega0=1.0, rho0=1.0)
    levels = boundary_sequences(params, lambda cyl: 0.45, n_levels=5)
    assert [l.omega for l in levels] == [1.0, 0.9, 0.9, 0.9, 0.9]


def test_boundary_ladder_rejects_expanding_radii():
    # datum oscillation above the initial bound would grow the cylinders
    params = IterationParams(s=0.5, p=3.0, eps=0.01, omega0=1.0, rho0=1.0)
    with pytest.raises(InvalidParamsError, match="nesting"):
        boundary_sequences(params, lambda cyl: 10.0, n_levels=5)


def test_initial_ladder_attrition():
    params = IterationParams(s=0.5, p=3.0, eps=0.01, omega0=1.0, rho0=1.0)
    levels = initial_sequences(params, lambda cyl: 0.0, n_levels=6)
    for i, lev in enumerate(levels):
        assert lev.omega == 0.875 ** i
        assert lev.rho == 4.0 ** (-i)


def test_initial_ladder_datum_dominant():
    params = IterationParams(s=0.5, p=3.0, eps=0.01, omega0=1.0, rho0=1.0)
    levels = initial_sequences(params, lambda cyl: 1.0, n_levels=6)
    assert [l.omega for l in levels] == [1.0, 2.0, 2.0, 2.0, 2.0, 2.0]


# ---------------------------------------------------------------- lemma: slow iteration


def test_lemma_epsilon_closed_form():
    assert lemma_iter_epsilon(4.0, 4.0, 4.0) == pytest.approx(
        0.011735643881643061, rel=1e-15)
    q = 4.0 * 4.0 * math.sqrt(15.0)
    assert lemma_iter_epsilon(4.0, 4.0, 4.0) == 0.5 * min(
        0.125, math.log2(q / (q - 1.0)))
    # larger n2 shrinks the admissible exponent
    assert lemma_iter_epsilon(4.0, 8.0, 4.0) < lemma_iter_epsilon(4.0, 4.0, 4.0)
    assert 0.0 < lemma_iter_epsilon(16.0, 16.0, 16.0) < 1.0


def test_lemma_epsilon_validation():
    with pytest.raises(InvalidParamsError, match="at least 4"):
        lemma_iter_epsilon(3.0, 4.0, 4.0)
    with pytest.raises(InvalidParamsError, match="l2 must dominate"):
        lemma_iter_epsilon(8.0, 4.0, 4.0)


@pytest.mark.parametrize("m2,n2,l2", [(4.0, 4.0, 4.0), (4.0, 8.0, 8.0), (8.0, 4.0, 16.0)])
@pytest.mark.parametrize("omega0", [1.0, 2.0, 10.0])
def test_lemma_iteration_holds_at_the_closed_form(m2, n2, l2, omega0):
    verdict = lemma_iter_verify(m2, n2, l2, omega0, n_max=10 ** 4)
    assert verdict.passed
    assert verdict.first_violation is None
    assert verdict.min_margin >= 0.0


def test_lemma_iteration_doubled_exponent_keeps_slack():
    # the closed form is far from sharp: doubling it stays admissible
    eps2 = 2.0 * lemma_iter_epsilon(4.0, 8.0, 4.0)
    verdict = lemma_iter_verify(4.0, 8.0, 4.0, 2.0, n_max=10 ** 4, epsilon=eps2)
    assert verdict.passed


@pytest.mark.parametrize("n2", [4.0, 8.0, 16.0])
@pytest.mark.parametrize("omega0", [1.0, 5.0])
def test_lemma_iteration_sharp_bound_fails_at_once(n2, omega0):
    # above log2(n2/(n2-1)) the n = 1 inequality flips, whatever omega0 is
    eps_bad = 1.05 * math.log2(n2 / (n2 - 1.0))
    verdict = lemma_iter_verify(4.0, n2, 4.0, omega0, n_max=100, epsilon=eps_bad)
    assert not verdict.passed
    assert verdict.first_violation == 1


# ---------------------------------------------------------------- lemma: geometric decay


def test_geometric_decay_matches_the_certificate():
    rep = geometric_convergence(2.0, 2.0, 1.0, 0.25, n_max=60)
    assert rep.threshold == 0.25
    assert rep.at_threshold
    assert rep.within_certificate is True
    assert rep.bounded and not rep.diverged
    ref = 0.25 * 2.0 ** -np.arange(21)
    np.testing.assert_allclose(rep.values[:21], ref, rtol=1e-12)


def test_geometric_decay_zero_start():
    rep = geometric_convergence(2.0, 2.0, 1.0, 0.0)
    assert np.all(rep.values == 0.0)
    assert rep.within_certificate is True and rep.bounded


def test_geometric_decay_b_one_gives_boundedness():
    rep = geometric_convergence(2.0, 1.0, 1.0, 0.5, n_max=50)
    assert rep.boundedness_only
    assert rep.within_certificate is None
    assert rep.bounded
    np.testing.assert_allclose(rep.values, 0.5, rtol=1e-12)
    above = geometric_convergence(1.0, 1.0, 1.0, 1.2, n_max=100)
    assert above.diverged and not above.bounded


def test_geometric_decay_above_threshold_diverges():
    rep = geometric_convergence(1.0, 2.0, 1.0, 0.75, n_max=200)
    assert not rep.at_threshold
    assert rep.within_certificate is None
    assert rep.diverged


def test_geometric_decay_validation():
    with pytest.raises(InvalidParamsError, match="c >= 1 and b >= 1"):
        geometric_convergence(0.5, 2.0, 1.0, 0.1)
    with pytest.raises(InvalidParamsError, match="alpha"):
        geometric_convergence(2.0, 2.0, 0.0, 0.1)
    with pytest.raises(InvalidParamsError, match="alpha"):
        geometric_convergence(2.0, 2.0, 1.0, -0.1)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(min_value=1.0, max_value=5.0),
    st.floats(min_value=1.0 + 1e-9, max_value=4.0),
    st.floats(min_value=0.2, max_value=2.0),
)
def test_geometric_decay_certificate_random_thresholds(c, b, alpha):
    a0 = c ** (-1.0 / alpha) * b ** (-1.0 / alpha ** 2)
    rep = geometric_convergence(c, b, alpha, a0, n_max=500)
    assert rep.at_threshold
    assert rep.within_certificate is True


# ---------------------------------------------------------------- measure density


def test_measure_density_half_line():
    pre = melt1d(n_nodes=65)
    grid = pre.problem.grid
    x = grid.coordinates()[:, 0]
    omega = x > 1e-12
    h = grid.spacing
    rep = measure_density(grid, omega, (0.0,), [4 * h, 8 * h], alpha0=0.25)
    assert rep.fractions == [5.0 / 9.0, 9.0 / 17.0]
    assert rep.min_fraction == 9.0 / 17.0
    assert rep.passed is True


def test_measure_density_flags_interior_anchor():
    pre = melt1d(n_nodes=65)
    grid = pre.problem.grid
    h = grid.spacing
    omega = np.ones(grid.n_nodes, dtype=bool)
    omega[0] = omega[-1] = False
    rep = measure_density(grid, omega, (0.0,), [2 * h, 4 * h], alpha0=0.25)
    assert rep.min_fraction == 0.0
    assert rep.passed is False


def test_measure_density_validation():
    pre = melt1d(n_nodes=17)
    grid = pre.problem.grid
    omega = np.ones(grid.n_nodes, dtype=bool)
    with pytest.raises(InvalidParamsError, match="match the grid"):
        measure_density(grid, omega[:-1], (0.0,), [0.1])
    with pytest.raises(InvalidParamsError, match="radii"):
        measure_density(grid, omega, (0.0,), [0.0])


# ---------------------------------------------------------------- modulus fit


def test_fit_recovers_a_synthetic_modulus():
    c, vs, eps, rho0 = 0.7, 1.3, 0.01, 0.5
    rs = rho0 * 0.7 ** np.arange(8)
    oscs = c * (1.0 + np.log(rho0 / rs)) ** (-vs / 2.0) + 4.0 * eps
    rep = fit_log_modulus(list(zip(rs, oscs)), eps, rho0)
    assert rep.c == pytest.approx(c, rel=1e-12)
    assert rep.varsigma == pytest.approx(vs, rel=1e-12)
    assert rep.residual < 1e-12
    assert rep.n_samples == 8


def test_fit_constant_excess_gives_zero_exponent():
    eps, rho0 = 0.01, 0.5
    rs = rho0 * 0.5 ** np.arange(5)
    oscs = np.full(5, 0.3 + 4.0 * eps)
    rep = fit_log_modulus(list(zip(rs, oscs)), eps, rho0)
    assert rep.varsigma == pytest.approx(0.0, abs=1e-12)
    assert rep.c == pytest.approx(0.3, rel=1e-12)


def test_fit_discards_floor_samples():
    eps, rho0 = 0.05, 0.5
    rs = rho0 * 0.5 ** np.arange(6)
    oscs = 0.4 * (1.0 + np.log(rho0 / rs)) ** -0.5 + 4.0 * eps
    oscs[-2:] = 4.0 * eps  # at the floor: dropped
    rep = fit_log_modulus(list(zip(rs, oscs)), eps, rho0)
    assert rep.n_samples == 4


def test_fit_error_modes():
    eps, rho0 = 0.05, 0.5
    with pytest.raises(NonpositiveExcessError):
        fit_log_modulus([(0.5, 0.2), (0.25, 0.2), (0.125, 0.1)], eps, rho0)
    with pytest.raises(InsufficientSamplesError, match="at least 3"):
        fit_log_modulus([(0.5, 1.0), (0.25, 0.9), (0.125, 4 * eps)], eps, rho0)
    with pytest.raises(InvalidParamsError, match="rho0"):
        fit_log_modulus([(0.6, 1.0), (0.25, 0.9), (0.125, 0.8)], eps, rho0)
    with pytest.raises(InsufficientSamplesError, match="distinct"):
        fit_log_modulus([(0.5, 1.0), (0.5, 0.9), (0.5, 0.8)], eps, rho0)


# ---------------------------------------------------------------- trajectory ladders


def test_modulus_ladder_radii_and_monotonicity(small_melt_traj):
    pre, traj = small_melt_traj
    levels, omega0 = modulus_ladder(traj, ((0.0,), pre.problem.horizon), 0.3,
                                    n_levels=5, shrink=0.7)
    radii = [r for r, _ in levels]
    np.testing.assert_allclose(radii, 0.3 * 0.7 ** np.arange(5), rtol=1e-15)
    oscs = [o for _, o in levels]
    assert all(a >= b for a, b in zip(oscs, oscs[1:]))
    assert omega0 >= 1.0


def test_oscillation_scale_floor():
    pre = const1d(value=0.3)
    traj = solve(pre.problem, pre.solver)
    scale = oscillation_scale(traj, Cylinder((0.0,), pre.problem.horizon, 0.4, 1.0))
    assert scale == 1.0


def test_sequence_tail_report_constant_solution():
    pre = const1d(value=0.3)
    traj = solve(pre.problem, pre.solver)
    params = IterationParams(s=0.5, p=3.0, eps=0.05, omega0=1.0, rho0=0.4)
    levels = interior_sequences(params, n_levels=4)
    recs = sequence_tail_report(traj, levels, ((0.0,), pre.problem.horizon))
    for rec in recs:
        assert rec.osc == 0.0
        assert rec.tail_plus == 0.0 and rec.tail_minus == 0.0
        assert rec.ratio == 0.0


def test_sequence_tail_report_bounded_ratios(small_melt_traj):
    pre, traj = small_melt_traj
    params = IterationParams(s=0.5, p=3.0, eps=pre.problem.eps, omega0=4.0, rho0=0.3)
    levels = interior_sequences(params, n_levels=6)
    recs = sequence_tail_report(traj, levels, ((0.0,), pre.problem.horizon))
    assert len(recs) == 6
    for rec in recs:
        assert np.isfinite(rec.ratio)
        assert 0.0 <= rec.ratio <= 0.5
        assert rec.osc <= rec.omega + 1e-12
