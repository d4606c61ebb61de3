"""Vanishing-regularization families, the two-field limit, convergence reports."""

from types import SimpleNamespace

import numpy as np
import pytest

from nlstefan import (
    FamilyEntry,
    FamilyResult,
    InconsistentFamilyError,
    InvalidParamsError,
    SolverConfig,
    UnresolvedBandError,
    convergence_report,
    limit_pair,
    run_family,
)
from nlstefan.presets import const1d, melt1d


@pytest.fixture(scope="module")
def melt_family():
    pre = melt1d(n_nodes=33, horizon=0.05, eps=0.2, n_steps=10)
    return pre, run_family(pre.problem, (0.4, 0.2, 0.1), pre.solver)


# ---------------------------------------------------------------- schedule checks


def test_family_schedule_validation():
    pre = const1d()
    with pytest.raises(InvalidParamsError, match="empty"):
        run_family(pre.problem, (), pre.solver)
    with pytest.raises(InvalidParamsError, match="lie in"):
        run_family(pre.problem, (1.5, 0.2), pre.solver)
    with pytest.raises(InvalidParamsError, match="decreasing"):
        run_family(pre.problem, (0.2, 0.2), pre.solver)
    with pytest.raises(InvalidParamsError, match="decreasing"):
        run_family(pre.problem, (0.1, 0.2), pre.solver)
    intrinsic = SolverConfig(dt_policy="intrinsic", dt_factor=1.0)
    with pytest.raises(InvalidParamsError, match="fixed step"):
        run_family(pre.problem, (0.2, 0.1), intrinsic)


def test_single_member_family_has_empty_distances():
    pre = const1d()
    fam = run_family(pre.problem, (0.1,), pre.solver)
    assert fam.distances.shape == (0, 0)
    assert fam.eps_values == [0.1]
    assert fam.successive_distances() == []
    assert len(fam.band_fractions) == 1


# ---------------------------------------------------------------- constant family


def test_constant_family_is_degenerate():
    pre = const1d(value=0.3)
    fam = run_family(pre.problem, (0.2, 0.1, 0.05), pre.solver)
    assert np.array_equal(fam.distances, np.zeros((3, 3)))
    assert fam.successive_distances() == [0.0, 0.0]
    # 0.3 clears every layer width, so no sample sits strictly inside
    assert fam.band_fractions == [0.0, 0.0, 0.0]


def test_constant_family_at_the_interface_is_all_band():
    pre = const1d(value=0.0)
    fam = run_family(pre.problem, (0.2, 0.1), pre.solver)
    # beta_eps(0) = 1/2 everywhere: the whole sample set is latent layer
    assert fam.band_fractions == [1.0, 1.0]


# ---------------------------------------------------------------- melt family


def test_family_distances_form_a_metric_table(melt_family):
    _, fam = melt_family
    d = fam.distances
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0.0)
    assert np.all(d[~np.eye(3, dtype=bool)] > 0.0)
    assert d[0, 2] <= d[0, 1] + d[1, 2] + 1e-15


def test_family_successive_distances_shrink(melt_family):
    _, fam = melt_family
    succ = fam.successive_distances()
    assert len(succ) == 2
    assert succ[1] < succ[0]


def test_family_band_fractions_shrink_with_eps(melt_family):
    _, fam = melt_family
    bands = fam.band_fractions
    assert all(0.0 < b < 1.0 for b in bands)
    assert all(b < a for a, b in zip(bands, bands[1:]))


def test_family_is_thread_count_invariant(melt_family):
    pre, fam = melt_family
    fam2 = run_family(pre.problem, (0.4, 0.2, 0.1), pre.solver, threads=2)
    assert np.array_equal(fam.distances, fam2.distances)
    assert fam.band_fractions == fam2.band_fractions
    for a, b in zip(fam.entries, fam2.entries):
        for sa, sb in zip(a.trajectory.states, b.trajectory.states):
            assert np.array_equal(sa, sb)


def test_family_records_failures_instead_of_aborting():
    pre = melt1d(n_nodes=33, horizon=0.05, eps=0.2, n_steps=10)
    hopeless = SolverConfig(dt=0.005, newton_tol=1e-16, newton_max=1)
    fam = run_family(pre.problem, (0.4, 0.2), hopeless)
    assert [e.ok for e in fam.entries] == [False, False]
    assert all(e.error for e in fam.entries)
    assert np.all(np.isnan(fam.distances))
    assert all(np.isnan(b) for b in fam.band_fractions)


# ---------------------------------------------------------------- limit pair


def test_limit_pair_contract(melt_family):
    _, fam = melt_family
    lp = limit_pair(fam, delta_resolve=0.05)
    assert lp.eps == 0.1
    assert lp.delta == 0.05
    assert 0.0 <= lp.band_fraction <= 1.0
    for u, w, v in zip(lp.u_states, lp.w_states, lp.v_states):
        assert np.array_equal(v, u + w)
        assert np.all((w >= 0.0) & (w <= 1.0))
        assert np.all(w[u > 0.05] == 1.0)
        assert np.all(w[u < -0.05] == 0.0)


def test_limit_pair_band_overflow():
    pre = const1d(value=0.0)
    fam = run_family(pre.problem, (0.2, 0.1), pre.solver)
    with pytest.raises(UnresolvedBandError, match="unresolved"):
        limit_pair(fam, delta_resolve=0.05, max_band_fraction=0.5)


def test_limit_pair_validation(melt_family):
    _, fam = melt_family
    with pytest.raises(InvalidParamsError, match="delta_resolve"):
        limit_pair(fam, delta_resolve=0.0)
    broken = FamilyResult(
        entries=[FamilyEntry(eps=0.1, trajectory=None, error="stalled")],
        distances=np.zeros((0, 0)), band_fractions=[float("nan")])
    with pytest.raises(InvalidParamsError, match="finest"):
        limit_pair(broken)


# ---------------------------------------------------------------- reports


def test_convergence_report_on_the_melt(melt_family):
    _, fam = melt_family
    rep = convergence_report(fam)
    assert rep.consistent
    assert rep.monotone
    assert rep.message == ""
    assert rep.eps_values == [0.4, 0.2, 0.1]
    assert rep.varsigma_values is None and rep.stable is None


def test_convergence_report_with_fits(melt_family):
    _, fam = melt_family
    fits = [SimpleNamespace(varsigma=1.0), SimpleNamespace(varsigma=1.1),
            SimpleNamespace(varsigma=0.95)]
    rep = convergence_report(fam, fits=fits)
    assert rep.varsigma_values == [1.0, 1.1, 0.95]
    assert rep.varsigma_spread == pytest.approx(0.15000000000000002)
    assert rep.stable is True
    wild = [SimpleNamespace(varsigma=1.0), SimpleNamespace(varsigma=3.0),
            SimpleNamespace(varsigma=0.5)]
    assert convergence_report(fam, fits=wild).stable is False


def test_convergence_report_needs_two_members():
    broken = FamilyResult(
        entries=[FamilyEntry(eps=0.1, trajectory=None, error="stalled")],
        distances=np.zeros((0, 0)), band_fractions=[float("nan")])
    with pytest.raises(InconsistentFamilyError, match="fewer than two"):
        convergence_report(broken)


def test_convergence_report_flags_mixed_grids():
    pre_a = melt1d(n_nodes=17, horizon=0.02, eps=0.2, n_steps=4)
    pre_b = melt1d(n_nodes=33, horizon=0.02, eps=0.2, n_steps=4)
    fam_a = run_family(pre_a.problem, (0.2,), pre_a.solver)
    fam_b = run_family(pre_b.problem, (0.1,), pre_b.solver)
    mixed = FamilyResult(
        entries=[fam_a.entries[0], fam_b.entries[0]],
        distances=np.zeros((2, 2)), band_fractions=[0.0, 0.0])
    rep = convergence_report(mixed)
    assert not rep.consistent
    assert "inconsistent" in rep.message
