"""Vanishing-regularization families and the two-field limit.

Solving the same problem for a decreasing schedule of eps values gives a
family whose members converge, and the regularized latent terms
w_eps = beta_eps(u_eps) accumulate on the indicator of the positive
phase.  The computable surrogate of the limit pair keeps the finest
member u, resolves w by sign wherever |u| exceeds a threshold, and keeps
the mollified value on the unresolved band in between.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from .enthalpy import RegularizedEnthalpy
from .errors import (InconsistentFamilyError, InvalidParamsError,
                     NewtonDivergenceError, UnresolvedBandError)
from .solver import LatticeProblem, SolverConfig, Trajectory, solve


@dataclass
class FamilyEntry:
    eps: float
    trajectory: Optional[Trajectory]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.trajectory is not None


@dataclass
class FamilyResult:
    entries: List[FamilyEntry]
    distances: np.ndarray
    band_fractions: List[float]

    @property
    def eps_values(self) -> List[float]:
        return [e.eps for e in self.entries]

    def successive_distances(self) -> List[float]:
        return [float(self.distances[i, i + 1]) for i in range(len(self.entries) - 1)]


def _family_member(problem: LatticeProblem, eps: float) -> LatticeProblem:
    return replace(problem, eps=eps, enthalpy=RegularizedEnthalpy(eps))


def run_family(problem: LatticeProblem, eps_values: Sequence[float],
               config: SolverConfig, threads: int = 1) -> FamilyResult:
    """Solve the problem for every eps in a strictly decreasing schedule.

    Members share the fixed time grid, so fields are comparable sample by
    sample.  Solver failures are recorded per entry instead of aborting
    the family; distances involving a failed entry are NaN.
    """
    eps_values = [float(e) for e in eps_values]
    if not eps_values:
        raise InvalidParamsError("the eps schedule is empty")
    if any(not 0.0 < e < 1.0 for e in eps_values):
        raise InvalidParamsError("eps values must lie in (0, 1)")
    if any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise InvalidParamsError("eps schedule must be strictly decreasing")
    if config.dt_policy != "fixed":
        raise InvalidParamsError("family solves require the fixed step policy "
                                 "so members share one time grid")

    def run_one(eps: float) -> FamilyEntry:
        try:
            return FamilyEntry(eps=eps, trajectory=solve(_family_member(problem, eps), config))
        except NewtonDivergenceError as exc:
            return FamilyEntry(eps=eps, trajectory=None, error=str(exc))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(run_one, eps_values))
    else:
        entries = [run_one(e) for e in eps_values]

    k = len(entries)
    if k == 1:
        distances = np.zeros((0, 0))
    else:
        distances = np.full((k, k), np.nan)
        for i in range(k):
            distances[i, i] = 0.0 if entries[i].ok else np.nan
            for j in range(i + 1, k):
                if entries[i].ok and entries[j].ok:
                    d = max(float(np.max(np.abs(a - b))) for a, b in
                            zip(entries[i].trajectory.states, entries[j].trajectory.states))
                    distances[i, j] = distances[j, i] = d
    # per-entry unresolved band: where the mollified phase indicator is
    # strictly between the pure phases, i.e. inside the latent layer
    fractions = []
    for entry in entries:
        if not entry.ok:
            fractions.append(float("nan"))
            continue
        enth = RegularizedEnthalpy(entry.eps)
        total = 0
        inside = 0
        for state in entry.trajectory.states:
            beta = enth.beta_eps(state)
            inside += int(np.sum((beta > 0.0) & (beta < 1.0)))
            total += state.size
        fractions.append(inside / total)
    return FamilyResult(entries=entries, distances=distances,
                        band_fractions=fractions)


@dataclass
class LimitPair:
    times: List[float]
    u_states: List[np.ndarray]
    w_states: List[np.ndarray]
    v_states: List[np.ndarray]
    band_fraction: float
    delta: float
    eps: float


def limit_pair(family: FamilyResult, delta_resolve: float = 0.05,
               max_band_fraction: float = 0.5) -> LimitPair:
    """Surrogate limit from the finest member.

    w is 1 where u > delta_resolve, 0 where u < -delta_resolve, and the
    clipped mollified value on the band between; v = u + w.  Fails if the
    band swallows more than max_band_fraction of the samples.
    """
    finest = family.entries[-1]
    if not finest.ok:
        raise InvalidParamsError("finest family member failed; no limit available")
    if not delta_resolve > 0.0:
        raise InvalidParamsError("delta_resolve must be positive")
    enth = RegularizedEnthalpy(finest.eps)
    traj = finest.trajectory
    w_states, v_states = [], []
    band_hits = 0
    total = 0
    for u in traj.states:
        w = np.clip(enth.beta_eps(u), 0.0, 1.0)
        w = np.where(u > delta_resolve, 1.0, w)
        w = np.where(u < -delta_resolve, 0.0, w)
        band = np.abs(u) <= delta_resolve
        band_hits += int(band.sum())
        total += u.size
        w_states.append(w)
        v_states.append(u + w)
    band_fraction = band_hits / total
    if band_fraction > max_band_fraction:
        raise UnresolvedBandError(
            f"sign unresolved on {band_fraction:.1%} of samples "
            f"(limit {max_band_fraction:.1%})")
    return LimitPair(times=list(traj.times), u_states=[u.copy() for u in traj.states],
                     w_states=w_states, v_states=v_states,
                     band_fraction=band_fraction, delta=delta_resolve, eps=finest.eps)


@dataclass
class ConvergenceReport:
    eps_values: List[float]
    successive_distances: List[float]
    monotone: bool
    consistent: bool
    message: str
    varsigma_values: Optional[List[float]]
    varsigma_spread: Optional[float]
    stable: Optional[bool]


def convergence_report(family: FamilyResult, fits=None,
                       max_spread: float = 0.5) -> ConvergenceReport:
    """Tabulate successive distances and, when per-entry modulus fits are
    given, the spread of the fitted decay exponents."""
    ok_entries = [e for e in family.entries if e.ok]
    if len(ok_entries) < 2:
        raise InconsistentFamilyError("fewer than two family members succeeded")
    grids = {e.trajectory.problem.grid for e in ok_entries}
    times = [tuple(e.trajectory.times) for e in ok_entries]
    consistent = len(grids) == 1 and len(set(times)) == 1
    message = "" if consistent else "inconsistent grids or time sampling across entries"
    dists = family.successive_distances()
    finite = [d for d in dists if np.isfinite(d)]
    monotone = all(b <= a * (1.0 + 1e-12) for a, b in zip(finite, finite[1:]))
    varsigma_values = None
    spread = None
    stable = None
    if fits is not None:
        varsigma_values = [float(f.varsigma) for f in fits]
        mean = float(np.mean(varsigma_values))
        spread = float(np.max(varsigma_values) - np.min(varsigma_values))
        stable = spread <= max_spread * max(abs(mean), 1e-12)
    return ConvergenceReport(eps_values=family.eps_values,
                             successive_distances=dists, monotone=monotone,
                             consistent=consistent, message=message,
                             varsigma_values=varsigma_values,
                             varsigma_spread=spread, stable=stable)
