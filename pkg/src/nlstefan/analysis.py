"""Intrinsic geometry, iteration sequences and modulus extraction.

The oscillation machinery works on backward cylinders

    Q_rho^(theta)(z0) = closed ball B_rho(x0)  x  (t0 - theta rho^{sp}, t0]

whose time depth is matched to the running oscillation omega through
theta = (omega/4)^{2-p} in the interior and (omega/4)^{1-p} at the
lateral boundary.  The shrinking ladders of radii and oscillation bounds
follow the reduction-of-oscillation recursions, the algebraic engine
behind them being the two small lemmas verified here exhaustively
(lemma_iter_* and geometric_convergence).  Measured oscillation decay is
summarized by fitting the logarithmic modulus

    osc(r) ~ c * (1 + ln(rho0 / r))^{-varsigma/2} + 4 eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import (EmptyCylinderError, InsufficientSamplesError,
                     InvalidParamsError, NonpositiveExcessError)
from .lattice import Grid, tail


@dataclass(frozen=True)
class Cylinder:
    """Backward space-time cylinder; the ball is closed, the window is
    half open: (t0 - theta rho^{sp}, t0]."""

    x0: tuple
    t0: float
    rho: float
    theta: float

    def __post_init__(self):
        if not self.rho > 0.0 or not self.theta > 0.0:
            raise InvalidParamsError("cylinder needs positive rho and theta")

    def depth(self, sp: float) -> float:
        return self.theta * self.rho ** sp

    def window(self, sp: float):
        return (self.t0 - self.depth(sp), self.t0)

    def shrink(self, factor: float) -> "Cylinder":
        return Cylinder(self.x0, self.t0, self.rho * factor, self.theta)


def intrinsic_theta(omega: float, p: float, boundary: bool = False) -> float:
    """Intrinsic time scaling (omega/4)^{2-p}, one power less at the boundary."""
    expo = (1.0 - p) if boundary else (2.0 - p)
    return (omega / 4.0) ** expo


def _cylinder_selection(traj, cyl: Cylinder):
    problem = traj.problem
    sp = problem.s * problem.p
    x0 = np.asarray(cyl.x0, dtype=float)
    coords = problem.grid.coordinates()
    dist = np.sqrt(np.sum((coords - x0[None, :]) ** 2, axis=1))
    node_sel = dist <= cyl.rho * (1.0 + 1e-12)
    t_lo, t_hi = cyl.window(sp)
    time_sel = [i for i, t in enumerate(traj.times)
                if t_lo - 1e-12 < t <= t_hi + 1e-12]
    if not node_sel.any() or not time_sel:
        raise EmptyCylinderError(
            f"cylinder rho={cyl.rho:.4g} about t0={cyl.t0:.4g} holds no samples")
    return node_sel, time_sel


def oscillation(traj, cyl: Cylinder) -> float:
    """sup - inf of the stored field over the cylinder's lattice samples."""
    node_sel, time_sel = _cylinder_selection(traj, cyl)
    block = np.stack([traj.states[i][node_sel] for i in time_sel])
    return float(np.max(block) - np.min(block))


def level_set_fraction(traj, cyl: Cylinder, side: str, level: float) -> float:
    """Fraction of cylinder samples with u <= level ("below") or u > level."""
    if side not in ("below", "above"):
        raise InvalidParamsError("side must be 'below' or 'above'")
    node_sel, time_sel = _cylinder_selection(traj, cyl)
    block = np.stack([traj.states[i][node_sel] for i in time_sel])
    if side == "below":
        return float(np.mean(block <= level))
    return float(np.mean(block > level))


# -- iteration parameter block -----------------------------------------------


@dataclass(frozen=True)
class IterationParams:
    """Constants of the oscillation reduction recursions.

    All named constants must be at least 4.  The interior ladder uses
    (m1, n1) for the radius factor and (m2, n2) for the oscillation
    factor; the lateral ladder adds the datum exponents (l1, l2) and the
    extra factor n0; the initial ladder divides radii by n_init.  The
    attrition floor of the time-direction decay is
    m = max(7/8, 2^{-s}).
    """

    s: float
    p: float
    eps: float
    omega0: float
    rho0: float
    m1: float = 4.0
    n1: float = 4.0
    m2: float = 4.0
    n2: float = 8.0
    l1: float = 4.0
    l2: float = 4.0
    n0: float = 4.0
    n_init: float = 4.0

    def __post_init__(self):
        if not 0.0 < self.s < 1.0 or not self.p > 2.0:
            raise InvalidParamsError("exponents out of range")
        if not self.eps > 0.0 or not self.omega0 > 0.0 or not self.rho0 > 0.0:
            raise InvalidParamsError("eps, omega0 and rho0 must be positive")
        for name in ("m1", "n1", "m2", "n2", "l1", "l2", "n0", "n_init"):
            if getattr(self, name) < 4.0:
                raise InvalidParamsError(f"{name} must be at least 4")

    @property
    def m(self) -> float:
        return max(7.0 / 8.0, 2.0 ** (-self.s))


@dataclass
class SequenceLevel:
    index: int
    rho: float
    omega: float
    theta: float
    stabilized: bool = False


def _check_nesting(levels: List[SequenceLevel], sp: float) -> None:
    for a, b in zip(levels, levels[1:]):
        if b.rho ** sp * b.theta > a.rho ** sp * a.theta * (1.0 + 1e-12):
            raise InvalidParamsError("cylinder nesting failed; constants too small")


def interior_sequences(params: IterationParams, n_levels: int = 40) -> List[SequenceLevel]:
    """Interior ladder rho_{i+1} = f1(omega_i) rho_i,
    omega_{i+1} = max(omega_i f2(omega_i), omega_i 2^{-s}, 4 eps),
    truncated once the oscillation bound stabilizes at 4 eps."""
    sp = params.s * params.p
    rho, omega = params.rho0, params.omega0
    out = [SequenceLevel(0, rho, omega, intrinsic_theta(omega, params.p))]
    for i in range(1, n_levels):
        f1 = omega ** params.m1 / (params.n1 * params.omega0 ** params.m1)
        f2 = 1.0 - omega ** params.m2 / (params.n2 * params.omega0 ** params.m2)
        rho = rho * f1
        omega = max(omega * f2, omega * 2.0 ** (-params.s), 4.0 * params.eps)
        stab = omega <= 4.0 * params.eps
        out.append(SequenceLevel(i, rho, omega, intrinsic_theta(omega, params.p), stab))
        if stab:
            break
    _check_nesting(out, sp)
    return out


def boundary_sequences(params: IterationParams, osc_g: Callable[[Cylinder], float],
                       z0=None, n_levels: int = 40) -> List[SequenceLevel]:
    """Lateral ladder; the datum oscillation on each cylinder enters the
    maximum and theta carries one power less of the oscillation."""
    sp = params.s * params.p
    x0, t0 = _normalize_anchor(z0)
    rho, omega = params.rho0, params.omega0
    out = [SequenceLevel(0, rho, omega, intrinsic_theta(omega, params.p, boundary=True))]
    for i in range(1, n_levels):
        cyl = Cylinder(x0, t0, rho, out[-1].theta)
        f1 = omega ** params.m1 / (params.n0 * params.n1 * params.omega0 ** params.l1)
        f2 = 1.0 - omega ** params.m2 / (params.n2 * params.omega0 ** params.l2)
        rho = rho * f1
        omega = max(omega * f2, omega * 2.0 ** (-params.s),
                    2.0 * float(osc_g(cyl)), 4.0 * params.eps)
        stab = omega <= 4.0 * params.eps
        out.append(SequenceLevel(i, rho, omega,
                                 intrinsic_theta(omega, params.p, boundary=True), stab))
        if stab:
            break
    _check_nesting(out, sp)
    return out


def initial_sequences(params: IterationParams, osc_g: Callable[[Cylinder], float],
                      z0=None, n_levels: int = 40) -> List[SequenceLevel]:
    """Initial-layer ladder rho_{i+1} = rho_i / n_init,
    omega_{i+1} = max(m omega_i, 2 osc_g(Q_i)) over forward windows
    (0, theta_i rho_i^{sp}]."""
    sp = params.s * params.p
    x0, _ = _normalize_anchor(z0)
    rho, omega = params.rho0, params.omega0
    theta = intrinsic_theta(omega, params.p)
    out = [SequenceLevel(0, rho, omega, theta)]
    for i in range(1, n_levels):
        # forward window (0, L] encoded as a backward cylinder anchored at L
        cyl = Cylinder(x0, theta * rho ** sp, rho, theta)
        omega = max(params.m * omega, 2.0 * float(osc_g(cyl)))
        rho = rho / params.n_init
        theta = intrinsic_theta(omega, params.p)
        out.append(SequenceLevel(i, rho, omega, theta))
    return out


def _normalize_anchor(z0):
    if z0 is None:
        return (0.0,), 0.0
    x0, t0 = z0
    if np.isscalar(x0):
        x0 = (float(x0),)
    return tuple(float(v) for v in x0), float(t0)


# -- algebraic lemmas ----------------------------------------------------------


def lemma_iter_epsilon(m2: float, n2: float, l2: float) -> float:
    """Closed-form admissible decay exponent for the slow iteration bound.

    Returns half the minimum of 1/(2 m2) and log2(q/(q-1)) with
    q = m2 n2 sqrt(n2^2 - 1); requires l2 >= m2 >= 4."""
    _check_lemma_params(m2, n2, l2)
    q = m2 * n2 * math.sqrt(n2 * n2 - 1.0)
    return 0.5 * min(1.0 / (2.0 * m2), math.log2(q / (q - 1.0)))


def _check_lemma_params(m2, n2, l2):
    if m2 < 4.0 or n2 < 4.0 or l2 < 4.0:
        raise InvalidParamsError("lemma constants must be at least 4")
    if l2 < m2:
        raise InvalidParamsError("l2 must dominate m2")


@dataclass
class IterVerdict:
    epsilon: float
    passed: bool
    first_violation: Optional[int]
    min_margin: float


def lemma_iter_verify(m2: float, n2: float, l2: float, omega0: float,
                      n_max: int = 10 ** 5, epsilon: float = None) -> IterVerdict:
    """Brute-force check of a_n >= a_{n-1} g(a_{n-1}) for the sequence
    a_n = omega0^{l2/m2} (1+n)^{-epsilon} and g(x) = 1 - x^{m2}/(n2 omega0^{l2})."""
    _check_lemma_params(m2, n2, l2)
    if not omega0 > 0.0:
        raise InvalidParamsError("omega0 must be positive")
    if epsilon is None:
        epsilon = lemma_iter_epsilon(m2, n2, l2)
    amp = omega0 ** (l2 / m2)
    n = np.arange(1, n_max + 1, dtype=float)
    a_now = amp * (1.0 + n) ** (-epsilon)
    a_prev = amp * n ** (-epsilon)
    g_prev = 1.0 - a_prev ** m2 / (n2 * omega0 ** l2)
    margin = a_now - a_prev * g_prev
    bad = np.nonzero(margin < 0.0)[0]
    first = int(bad[0] + 1) if bad.size else None
    return IterVerdict(epsilon=epsilon, passed=first is None,
                       first_violation=first, min_margin=float(np.min(margin)))


@dataclass
class GeometricDecayReport:
    threshold: float
    at_threshold: bool
    values: np.ndarray
    within_certificate: Optional[bool]
    bounded: bool
    diverged: bool
    boundedness_only: bool


def geometric_convergence(c: float, b: float, alpha: float, a0: float,
                          n_max: int = 1000) -> GeometricDecayReport:
    """Iterate A_{i+1} = c b^i A_i^{1+alpha} in log space and compare with
    the decay certificate A_0 b^{-i/alpha}.

    For b > 1 and A_0 at or below the threshold c^{-1/alpha} b^{-1/alpha^2}
    the certificate holds; for b == 1 the threshold only guarantees
    boundedness, which is what gets checked then.
    """
    if c < 1.0 or b < 1.0:
        raise InvalidParamsError("lemma requires c >= 1 and b >= 1")
    if not alpha > 0.0 or a0 < 0.0:
        raise InvalidParamsError("alpha must be positive and a0 nonnegative")
    threshold = c ** (-1.0 / alpha) * b ** (-1.0 / alpha ** 2)
    slack = 1e-9
    boundedness_only = (b == 1.0)
    if a0 == 0.0:
        values = np.zeros(n_max + 1)
        return GeometricDecayReport(threshold=threshold, at_threshold=True,
                                    values=values,
                                    within_certificate=None if boundedness_only else True,
                                    bounded=True, diverged=False,
                                    boundedness_only=boundedness_only)
    lb = math.log(b)
    # the threshold start A_i = T b^{-i/alpha} solves the recursion exactly;
    # splitting log A_i = (log T - i lb/alpha) + e_i reduces the update to
    # e_{i+1} = (1+alpha) e_i, so the repulsive fixed point does not amplify
    # rounding: a0 == threshold gives e identically zero
    e0 = math.log(a0 / threshold)
    log_t = math.log(threshold)
    dev = np.empty(n_max + 1)
    dev[0] = e0
    n_kept = n_max + 1
    for i in range(n_max):
        e_next = (1.0 + alpha) * dev[i]
        if e_next < -1e12:
            e_next = -1e12
        dev[i + 1] = e_next
        if log_t - (i + 1) * lb / alpha + e_next > 300.0:
            n_kept = i + 2
            break
    dev = dev[:n_kept]
    idx = np.arange(dev.size)
    log_a = log_t - idx * (lb / alpha) + dev
    at_threshold = a0 <= threshold * (1.0 + 1e-12)
    diverged = bool(log_a[-1] > 230.0)
    bounded = bool(np.all(log_a <= log_a[0] + slack)) and not diverged
    if at_threshold and not boundedness_only:
        within = bool(np.all(dev <= e0 + slack)) and dev.size == n_max + 1
    else:
        within = None
    with np.errstate(over="ignore"):
        values = np.exp(log_a)
    return GeometricDecayReport(threshold=threshold, at_threshold=at_threshold,
                                values=values, within_certificate=within,
                                bounded=bounded, diverged=diverged,
                                boundedness_only=boundedness_only)


# -- measured decay ------------------------------------------------------------


@dataclass
class MeasureDensityReport:
    radii: List[float]
    fractions: List[float]
    min_fraction: float
    alpha0: Optional[float]
    passed: Optional[bool]


def measure_density(grid: Grid, omega_mask: np.ndarray, x0,
                    radii: Sequence[float], alpha0: float = None) -> MeasureDensityReport:
    """Lattice fraction of the complement of the unknown set in balls
    around x0; the boundary regularity machinery assumes it stays above
    a fixed alpha0."""
    omega_mask = np.asarray(omega_mask, dtype=bool)
    if omega_mask.shape != (grid.n_nodes,):
        raise InvalidParamsError("omega_mask must match the grid size")
    x0 = np.asarray(x0, dtype=float).reshape(grid.dimension)
    h = grid.spacing
    coords = grid.coordinates()
    fractions = []
    for r in radii:
        if not r > 0.0:
            raise InvalidParamsError("radii must be positive")
        reach = int(math.ceil(r / h)) + 1
        anchor_idx = np.round((x0 - np.asarray(grid.origin)) / h).astype(int)
        axes = [grid.origin[d] + h * np.arange(anchor_idx[d] - reach, anchor_idx[d] + reach + 1)
                for d in range(grid.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([mm.ravel() for mm in mesh], axis=1)
        d = np.sqrt(np.sum((pts - x0[None, :]) ** 2, axis=1))
        in_ball = d <= r * (1.0 + 1e-12)
        pts = pts[in_ball]
        # a lattice point belongs to the unknown set only if it is a box
        # node flagged by the mask
        in_omega = np.zeros(pts.shape[0], dtype=bool)
        idx = np.round((pts - np.asarray(grid.origin)[None, :]) / h).astype(int)
        ok = np.ones(pts.shape[0], dtype=bool)
        for dim in range(grid.dimension):
            ok &= (idx[:, dim] >= 0) & (idx[:, dim] < grid.shape[dim])
        if ok.any():
            sub = idx[ok]
            flat_idx = np.ravel_multi_index(tuple(sub.T), grid.shape)
            in_omega[ok] = omega_mask[flat_idx]
        fractions.append(float(np.mean(~in_omega)))
    min_fraction = min(fractions)
    passed = None if alpha0 is None else min_fraction >= alpha0
    return MeasureDensityReport(radii=list(radii), fractions=fractions,
                                min_fraction=min_fraction, alpha0=alpha0, passed=passed)


@dataclass
class ModulusReport:
    c: float
    varsigma: float
    eps: float
    rho0: float
    n_samples: int
    residual: float
    radii: List[float]
    oscillations: List[float]


def fit_log_modulus(samples: Sequence, eps: float, rho0: float) -> ModulusReport:
    """Least squares fit of ln(osc - 4 eps) against ln(1 + ln(rho0/r)).

    The model is osc(r) = c (1 + ln(rho0/r))^{-varsigma/2} + 4 eps;
    samples at or below the additive floor are discarded, and at least
    three usable samples are required.
    """
    rs, oscs = [], []
    for r, o in samples:
        if not 0.0 < r <= rho0 * (1.0 + 1e-12):
            raise InvalidParamsError("sample radii must lie in (0, rho0]")
        rs.append(float(r))
        oscs.append(float(o))
    rs = np.asarray(rs)
    oscs = np.asarray(oscs)
    excess = oscs - 4.0 * eps
    usable = excess > 1e-12
    if not usable.any():
        raise NonpositiveExcessError("every sample sits at or below the 4 eps floor")
    if int(usable.sum()) < 3:
        raise InsufficientSamplesError("need at least 3 samples above the floor")
    x = np.log1p(np.log(rho0 / rs[usable]))
    y = np.log(excess[usable])
    # closed-form least squares; keeps the hot path BLAS-free
    xm = float(np.mean(x))
    ym = float(np.mean(y))
    var = float(np.sum((x - xm) ** 2))
    if var <= 0.0:
        raise InsufficientSamplesError("sample radii are not distinct enough to fit")
    slope = float(np.sum((x - xm) * (y - ym))) / var
    intercept = ym - slope * xm
    resid = math.sqrt(float(np.mean((y - (intercept + slope * x)) ** 2)))
    return ModulusReport(c=math.exp(intercept), varsigma=-2.0 * slope, eps=eps,
                         rho0=rho0, n_samples=int(usable.sum()), residual=resid,
                         radii=list(rs[usable]), oscillations=list(oscs[usable]))


def modulus_ladder(traj, z0, rho0: float, n_levels: int = 8,
                   shrink: float = 0.65, omega0: float = None):
    """Oscillation samples over a geometric ladder of intrinsic cylinders.

    theta is frozen at (omega0/4)^{2-p} with omega0 estimated from the
    trajectory (2 sup |u| + tail over the base cylinder) unless given.
    Returns (levels, omega0) with levels a list of (radius, oscillation).
    """
    problem = traj.problem
    x0, t0 = _normalize_anchor(z0)
    if omega0 is None:
        base = Cylinder(x0, t0, rho0, 1.0)
        omega0 = oscillation_scale(traj, base)
    theta = intrinsic_theta(omega0, problem.p)
    levels = []
    for i in range(n_levels):
        r = rho0 * shrink ** i
        levels.append((r, oscillation(traj, Cylinder(x0, t0, r, theta))))
    return levels, omega0


def oscillation_scale(traj, cyl: Cylinder) -> float:
    """Global scale 2 sup |u| + tail over the cylinder, floored at 1."""
    problem = traj.problem
    sp = problem.s * problem.p
    node_sel, time_sel = _cylinder_selection(traj, cyl)
    sup = max(float(np.max(np.abs(traj.states[i][node_sel]))) for i in time_sel)
    tl = tail(traj.samples(), cyl.x0, cyl.rho, cyl.window(sp), problem.s, problem.p)
    return max(2.0 * sup + tl, 1.0)


@dataclass
class LevelTailRecord:
    index: int
    rho: float
    omega: float
    theta: float
    osc: float
    tail_plus: float
    tail_minus: float
    ratio: float


def sequence_tail_report(traj, levels: Sequence[SequenceLevel], z0) -> List[LevelTailRecord]:
    """Tail-to-oscillation ratios of the truncations (u - mu_i^±)_± along
    a cylinder ladder; mu_i^+ is the running sup and mu_i^- = mu_i^+ - omega_i.

    The ratios estimate the constant c0 in the inductive tail bound
    Tail((u - mu_i^±)_±; Q_i) <= c0 omega_i.
    """
    problem = traj.problem
    sp = problem.s * problem.p
    x0, t0 = _normalize_anchor(z0)
    out = []
    for lev in levels:
        cyl = Cylinder(x0, t0, lev.rho, lev.theta)
        node_sel, time_sel = _cylinder_selection(traj, cyl)
        block = np.stack([traj.states[i][node_sel] for i in time_sel])
        mu_plus = float(np.max(block))
        mu_minus = mu_plus - lev.omega
        osc = float(np.max(block) - np.min(block))
        window = cyl.window(sp)
        samples = traj.samples()
        t_plus = tail([(t, f.map(lambda v: np.clip(v - mu_plus, 0.0, None)))
                       for t, f in samples], x0, lev.rho, window, problem.s, problem.p)
        t_minus = tail([(t, f.map(lambda v: np.clip(mu_minus - v, 0.0, None)))
                        for t, f in samples], x0, lev.rho, window, problem.s, problem.p)
        out.append(LevelTailRecord(index=lev.index, rho=lev.rho, omega=lev.omega,
                                   theta=lev.theta, osc=osc, tail_plus=t_plus,
                                   tail_minus=t_minus,
                                   ratio=max(t_plus, t_minus) / lev.omega))
    return out
