"""Run configuration: strict JSON schema, canonical emission.

Unknown keys are rejected everywhere and every violation is reported at
once, each prefixed by its JSON path.  Emission reproduces a fixed field
order, so emit(parse(x)) canonicalizes any accepted input.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Union

import numpy as np

from .errors import SchemaViolationError
from .lattice import Grid, KernelSpec
from .presets import load_preset
from .solver import LatticeProblem, SolverConfig


@dataclass
class BoxSpec:
    lo: List[float]
    hi: List[float]
    nodes: List[int]
    r_infinity: float


@dataclass
class InlineProblem:
    s: float
    p: float
    lam: float
    eps: float
    horizon: float
    box: BoxSpec
    unknown_lo: List[float]
    unknown_hi: List[float]
    datum_value: float
    initial_kind: str = "constant"      # "constant" | "core"
    initial_value: float = 0.0
    initial_inside: float = 0.0
    initial_radius: float = 0.0


@dataclass
class SolverSection:
    dt_policy: str = "fixed"
    dt: Optional[float] = None
    dt_factor: float = 1.0
    newton_tol: float = 1e-10
    newton_max: int = 40
    damping: float = 0.5
    store_every: int = 1


@dataclass
class AnalysisSection:
    anchor: Optional[List[float]] = None    # [x..., t]
    rho0: Optional[float] = None
    levels: Optional[int] = None            # None: take the preset's value
    shrink: Optional[float] = None


@dataclass
class ContinuationSection:
    eps_values: List[float] = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    delta_resolve: float = 0.05


@dataclass
class TailSection:
    center: Optional[List[float]] = None    # [x..., t]
    rho: Optional[float] = None
    window: Optional[List[float]] = None


@dataclass
class RunConfig:
    problem: Union[str, InlineProblem] = "melt1d"
    overrides: dict = field(default_factory=dict)
    solver: Optional[SolverSection] = None
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    continuation: ContinuationSection = field(default_factory=ContinuationSection)
    tail: TailSection = field(default_factory=TailSection)
    seed: int = 0


_NUMBER = (int, float)


class _Validator:
    def __init__(self):
        self.violations: List[str] = []

    def fail(self, path: str, message: str):
        self.violations.append(f"{path}: {message}")

    def check_keys(self, path: str, raw: dict, allowed):
        for key in raw:
            if key not in allowed:
                self.fail(f"{path}.{key}" if path else key, "unknown key")

    def number(self, path: str, value, positive=False):
        if not isinstance(value, _NUMBER) or isinstance(value, bool):
            self.fail(path, "expected a number")
            return None
        if positive and not value > 0:
            self.fail(path, "must be positive")
            return None
        return float(value)

    def integer(self, path: str, value, minimum=None):
        if not isinstance(value, int) or isinstance(value, bool):
            self.fail(path, "expected an integer")
            return None
        if minimum is not None and value < minimum:
            self.fail(path, f"must be at least {minimum}")
            return None
        return value

    def number_list(self, path: str, value, length=None):
        if not isinstance(value, list) or not all(
                isinstance(v, _NUMBER) and not isinstance(v, bool) for v in value):
            self.fail(path, "expected a list of numbers")
            return None
        if length is not None and len(value) != length:
            self.fail(path, f"expected length {length}")
            return None
        return [float(v) for v in value]


def _parse_inline_problem(v: _Validator, raw: dict) -> Optional[InlineProblem]:
    allowed = {"s", "p", "lam", "eps", "horizon", "box", "unknown", "datum", "initial"}
    v.check_keys("problem", raw, allowed)
    missing = [k for k in ("s", "p", "eps", "horizon", "box", "unknown", "datum")
               if k not in raw]
    for k in missing:
        v.fail(f"problem.{k}", "missing required key")
    if missing:
        return None
    s = v.number("problem.s", raw["s"])
    p = v.number("problem.p", raw["p"])
    if s is not None and not 0.0 < s < 1.0:
        v.fail("problem.s", "s must lie in (0, 1)")
    if p is not None and not p > 2.0:
        v.fail("problem.p", "p must exceed 2")
    lam = v.number("problem.lam", raw.get("lam", 1.0))
    eps = v.number("problem.eps", raw["eps"], positive=True)
    horizon = v.number("problem.horizon", raw["horizon"], positive=True)

    box = None
    if isinstance(raw["box"], dict):
        v.check_keys("problem.box", raw["box"], {"lo", "hi", "nodes", "r_infinity"})
        lo = v.number_list("problem.box.lo", raw["box"].get("lo"))
        hi = v.number_list("problem.box.hi", raw["box"].get("hi"))
        nodes = raw["box"].get("nodes")
        if not isinstance(nodes, list) or not all(isinstance(n, int) for n in nodes):
            v.fail("problem.box.nodes", "expected a list of integers")
            nodes = None
        r_inf = v.number("problem.box.r_infinity", raw["box"].get("r_infinity", 0.0),
                         positive=True)
        if lo is not None and hi is not None and nodes is not None and r_inf is not None:
            if not (len(lo) == len(hi) == len(nodes)) or len(lo) not in (1, 2):
                v.fail("problem.box", "lo, hi, nodes must share length 1 or 2")
            else:
                box = BoxSpec(lo=lo, hi=hi, nodes=nodes, r_infinity=r_inf)
    else:
        v.fail("problem.box", "expected an object")

    unknown_lo = unknown_hi = None
    if isinstance(raw["unknown"], dict):
        v.check_keys("problem.unknown", raw["unknown"], {"lo", "hi"})
        unknown_lo = v.number_list("problem.unknown.lo", raw["unknown"].get("lo"))
        unknown_hi = v.number_list("problem.unknown.hi", raw["unknown"].get("hi"))
    else:
        v.fail("problem.unknown", "expected an object")

    datum_value = None
    if isinstance(raw["datum"], dict):
        v.check_keys("problem.datum", raw["datum"], {"type", "value"})
        if raw["datum"].get("type") != "constant":
            v.fail("problem.datum.type", "only 'constant' is supported inline")
        datum_value = v.number("problem.datum.value", raw["datum"].get("value"))
    else:
        v.fail("problem.datum", "expected an object")

    initial_kind = "constant"
    initial_value = datum_value if datum_value is not None else 0.0
    initial_inside = 0.0
    initial_radius = 0.0
    if "initial" in raw:
        if isinstance(raw["initial"], dict):
            v.check_keys("problem.initial", raw["initial"],
                         {"type", "value", "inside", "radius"})
            kind = raw["initial"].get("type", "constant")
            if kind not in ("constant", "core"):
                v.fail("problem.initial.type", "expected 'constant' or 'core'")
            else:
                initial_kind = kind
            if initial_kind == "constant":
                got = v.number("problem.initial.value",
                               raw["initial"].get("value", initial_value))
                initial_value = got if got is not None else initial_value
            else:
                initial_inside = v.number("problem.initial.inside",
                                          raw["initial"].get("inside", 0.0)) or 0.0
                initial_radius = v.number("problem.initial.radius",
                                          raw["initial"].get("radius", 0.0),
                                          positive=True) or 0.0
                got = v.number("problem.initial.value",
                               raw["initial"].get("value", initial_value))
                initial_value = got if got is not None else initial_value
        else:
            v.fail("problem.initial", "expected an object")

    if v.violations:
        return None
    return InlineProblem(s=s, p=p, lam=lam, eps=eps, horizon=horizon, box=box,
                         unknown_lo=unknown_lo or [], unknown_hi=unknown_hi or [],
                         datum_value=datum_value, initial_kind=initial_kind,
                         initial_value=initial_value, initial_inside=initial_inside,
                         initial_radius=initial_radius)


def _parse_solver(v: _Validator, raw: dict) -> Optional[SolverSection]:
    allowed = {"dt_policy", "dt", "dt_factor", "newton_tol", "newton_max",
               "damping", "store_every"}
    v.check_keys("solver", raw, allowed)
    sec = SolverSection()
    if "dt_policy" in raw:
        if raw["dt_policy"] not in ("fixed", "intrinsic"):
            v.fail("solver.dt_policy", "expected 'fixed' or 'intrinsic'")
        else:
            sec.dt_policy = raw["dt_policy"]
    if "dt" in raw:
        sec.dt = v.number("solver.dt", raw["dt"], positive=True)
    if "dt_factor" in raw:
        sec.dt_factor = v.number("solver.dt_factor", raw["dt_factor"], positive=True) or 1.0
    if "newton_tol" in raw:
        sec.newton_tol = v.number("solver.newton_tol", raw["newton_tol"], positive=True) or 1e-10
    if "newton_max" in raw:
        sec.newton_max = v.integer("solver.newton_max", raw["newton_max"], minimum=1) or 40
    if "damping" in raw:
        d = v.number("solver.damping", raw["damping"], positive=True)
        if d is not None and not d < 1.0:
            v.fail("solver.damping", "must lie in (0, 1)")
        elif d is not None:
            sec.damping = d
    if "store_every" in raw:
        sec.store_every = v.integer("solver.store_every", raw["store_every"], minimum=1) or 1
    return sec


def parse_run_config(source) -> RunConfig:
    """Parse and validate a run configuration (JSON text or dict)."""
    if isinstance(source, str):
        try:
            raw = json.loads(source)
        except json.JSONDecodeError as exc:
            raise SchemaViolationError(
                [f"json: {exc.msg} at line {exc.lineno} column {exc.colno}"])
    else:
        raw = source
    if not isinstance(raw, dict):
        raise SchemaViolationError(["top level: expected an object"])
    v = _Validator()
    allowed = {"problem", "overrides", "solver", "analysis", "continuation",
               "tail", "seed"}
    v.check_keys("", raw, allowed)
    cfg = RunConfig()
    prob = raw.get("problem", "melt1d")
    if isinstance(prob, str):
        cfg.problem = prob
    elif isinstance(prob, dict):
        inline = _parse_inline_problem(v, prob)
        if inline is not None:
            cfg.problem = inline
    else:
        v.fail("problem", "expected a preset name or an object")

    if "overrides" in raw:
        if not isinstance(raw["overrides"], dict):
            v.fail("overrides", "expected an object")
        else:
            ok_keys = {"n_nodes", "horizon", "eps", "n_steps", "c_g", "delta", "value"}
            v.check_keys("overrides", raw["overrides"], ok_keys)
            cfg.overrides = dict(raw["overrides"])

    if "solver" in raw:
        if not isinstance(raw["solver"], dict):
            v.fail("solver", "expected an object")
        else:
            cfg.solver = _parse_solver(v, raw["solver"])

    if "analysis" in raw:
        if not isinstance(raw["analysis"], dict):
            v.fail("analysis", "expected an object")
        else:
            v.check_keys("analysis", raw["analysis"], {"anchor", "rho0", "levels", "shrink"})
            sec = AnalysisSection()
            if "anchor" in raw["analysis"]:
                sec.anchor = v.number_list("analysis.anchor", raw["analysis"]["anchor"])
            if "rho0" in raw["analysis"]:
                sec.rho0 = v.number("analysis.rho0", raw["analysis"]["rho0"], positive=True)
            if "levels" in raw["analysis"]:
                sec.levels = v.integer("analysis.levels", raw["analysis"]["levels"], minimum=2)
            if "shrink" in raw["analysis"]:
                sh = v.number("analysis.shrink", raw["analysis"]["shrink"], positive=True)
                if sh is not None and not sh < 1.0:
                    v.fail("analysis.shrink", "must lie in (0, 1)")
                elif sh is not None:
                    sec.shrink = sh
            cfg.analysis = sec

    if "continuation" in raw:
        if not isinstance(raw["continuation"], dict):
            v.fail("continuation", "expected an object")
        else:
            v.check_keys("continuation", raw["continuation"], {"eps_values", "delta_resolve"})
            sec = ContinuationSection()
            if "eps_values" in raw["continuation"]:
                vals = v.number_list("continuation.eps_values", raw["continuation"]["eps_values"])
                if vals is not None:
                    sec.eps_values = vals
            if "delta_resolve" in raw["continuation"]:
                dr = v.number("continuation.delta_resolve",
                              raw["continuation"]["delta_resolve"], positive=True)
                if dr is not None:
                    sec.delta_resolve = dr
            cfg.continuation = sec

    if "tail" in raw:
        if not isinstance(raw["tail"], dict):
            v.fail("tail", "expected an object")
        else:
            v.check_keys("tail", raw["tail"], {"center", "rho", "window"})
            sec = TailSection()
            if "center" in raw["tail"]:
                sec.center = v.number_list("tail.center", raw["tail"]["center"])
            if "rho" in raw["tail"]:
                sec.rho = v.number("tail.rho", raw["tail"]["rho"], positive=True)
            if "window" in raw["tail"]:
                sec.window = v.number_list("tail.window", raw["tail"]["window"], length=2)
            cfg.tail = sec

    if "seed" in raw:
        got = v.integer("seed", raw["seed"], minimum=0)
        if got is not None:
            cfg.seed = got

    if v.violations:
        raise SchemaViolationError(v.violations)
    return cfg


def emit_run_config(cfg: RunConfig) -> str:
    """Canonical JSON in declaration order.

    The output is itself a valid input: absent optional fields are
    omitted rather than emitted as nulls, and inline problems are written
    back in the nested input shape, so emit(parse(x)) is idempotent.
    """
    if isinstance(cfg.problem, str):
        prob = cfg.problem
    else:
        ip = cfg.problem
        prob = {
            "s": ip.s, "p": ip.p, "lam": ip.lam, "eps": ip.eps,
            "horizon": ip.horizon,
            "box": {"lo": ip.box.lo, "hi": ip.box.hi, "nodes": ip.box.nodes,
                    "r_infinity": ip.box.r_infinity},
            "unknown": {"lo": ip.unknown_lo, "hi": ip.unknown_hi},
            "datum": {"type": "constant", "value": ip.datum_value},
        }
        if ip.initial_kind == "constant":
            prob["initial"] = {"type": "constant", "value": ip.initial_value}
        else:
            prob["initial"] = {"type": "core", "value": ip.initial_value,
                               "inside": ip.initial_inside,
                               "radius": ip.initial_radius}
    payload = {"problem": prob}
    if cfg.overrides:
        payload["overrides"] = dict(cfg.overrides)
    if cfg.solver is not None:
        payload["solver"] = {k: v for k, v in asdict(cfg.solver).items()
                             if v is not None}
    analysis = {k: v for k, v in asdict(cfg.analysis).items() if v is not None}
    if analysis:
        payload["analysis"] = analysis
    payload["continuation"] = asdict(cfg.continuation)
    tail_sec = {k: v for k, v in asdict(cfg.tail).items() if v is not None}
    if tail_sec:
        payload["tail"] = tail_sec
    payload["seed"] = cfg.seed
    return json.dumps(payload, indent=2) + "\n"


def _build_inline(inline: InlineProblem) -> LatticeProblem:
    box = inline.box
    dim = len(box.lo)
    spacings = [(h - l) / (n - 1) for l, h, n in zip(box.lo, box.hi, box.nodes)]
    spacing = spacings[0]
    if any(abs(sp - spacing) > 1e-12 * abs(spacing) for sp in spacings):
        raise SchemaViolationError(["problem.box: axes must share one spacing"])
    grid = Grid(spacing=spacing, shape=tuple(box.nodes), origin=tuple(box.lo),
                r_infinity=box.r_infinity)
    coords = grid.coordinates()
    mask = np.ones(grid.n_nodes, dtype=bool)
    for d in range(dim):
        mask &= (coords[:, d] > inline.unknown_lo[d] + 1e-12)
        mask &= (coords[:, d] < inline.unknown_hi[d] - 1e-12)
    value = inline.datum_value
    g = lambda x, t, _v=value: np.full(np.atleast_2d(x).shape[0], _v)
    if inline.initial_kind == "constant":
        initial = np.where(mask, inline.initial_value, value)
    else:
        r = np.sqrt(np.sum(coords ** 2, axis=1))
        core = np.where(r < inline.initial_radius, inline.initial_inside,
                        inline.initial_value)
        initial = np.where(mask, core, value)
    return LatticeProblem(
        s=inline.s, p=inline.p, kernel=KernelSpec(lam=inline.lam), grid=grid,
        unknown_mask=mask, dirichlet=g, far_value=value, initial=initial,
        horizon=inline.horizon, eps=inline.eps)


def realize(cfg: RunConfig):
    """Turn a parsed config into (preset, problem, solver_config).

    Preset names go through the catalog with the overrides applied; the
    solver section then overrides the preset's stepping controls.
    """
    if isinstance(cfg.problem, str):
        preset = load_preset(cfg.problem, **cfg.overrides)
        problem = preset.problem
        solver_cfg = preset.solver
    else:
        preset = None
        problem = _build_inline(cfg.problem)
        solver_cfg = SolverConfig(dt=problem.horizon / 100.0)
    if cfg.solver is not None:
        sec = cfg.solver
        solver_cfg = SolverConfig(
            dt=sec.dt if sec.dt is not None else solver_cfg.dt,
            dt_policy=sec.dt_policy,
            dt_factor=sec.dt_factor,
            newton_tol=sec.newton_tol,
            newton_max=sec.newton_max,
            damping=sec.damping,
            store_every=sec.store_every)
    return preset, problem, solver_cfg
