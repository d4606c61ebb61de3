"""Lattice laboratory for a regularized nonlocal two-phase free boundary flow.

The package solves implicit time steps of ``d/dt (u + beta_eps(u)) + L u = 0``
where ``L`` is a singular nonlocal operator of fractional p-Laplacian type,
and ships the measurement tools used to study the solutions: oscillation
ladders on intrinsically scaled cylinders, nonlocal tail functionals, energy
audits, and the small algebraic lemmas that drive the regularity iteration.
"""

from .analysis import (Cylinder, GeometricDecayReport, IterationParams,
                       IterVerdict, LevelTailRecord, MeasureDensityReport,
                       ModulusReport, SequenceLevel, boundary_sequences,
                       fit_log_modulus, geometric_convergence,
                       initial_sequences, interior_sequences, intrinsic_theta,
                       lemma_iter_epsilon, lemma_iter_verify,
                       level_set_fraction, measure_density, modulus_ladder,
                       oscillation, oscillation_scale, sequence_tail_report)
from .continuation import (ConvergenceReport, FamilyEntry, FamilyResult,
                           LimitPair, convergence_report, limit_pair,
                           run_family)
from .config import (RunConfig, emit_run_config, parse_run_config, realize)
from .enthalpy import (MollifierSpec, RegularizedEnthalpy, ScaledEnthalpy,
                       beta_graph, normalization_constant)
from .errors import (DegenerateCutoffError, EmptyCylinderError,
                     EmptyWindowError, InconsistentFamilyError,
                     InsufficientSamplesError, InvalidExponentError,
                     InvalidParamsError, NewtonDivergenceError, NlstefanError,
                     NonpositiveExcessError, SchemaViolationError,
                     UnresolvedBandError)
from .lattice import (ExteriorRule, Field, Grid, KernelAuditReport,
                      KernelSpec, OperatorWorkspace, apply_operator,
                      check_exponents, kernel_audit, phi_p, tail)
from .presets import CATALOG, Preset, load_preset
from .solver import (CaccioppoliReport, LatticeProblem, MaxPrincipleReport,
                     RadialCutoff, SolverConfig, StepDiagnostics, Trajectory,
                     caccioppoli_audit, energy_history, implicit_step,
                     max_principle_check, normalize, solve, space_time_bump,
                     truncate_opposite, weak_residual)

__version__ = "0.1.0"

__all__ = [
    "CATALOG", "CaccioppoliReport", "ConvergenceReport", "Cylinder",
    "DegenerateCutoffError", "EmptyCylinderError", "EmptyWindowError",
    "ExteriorRule", "FamilyEntry", "FamilyResult", "Field",
    "GeometricDecayReport", "Grid", "InconsistentFamilyError",
    "InsufficientSamplesError", "InvalidExponentError", "InvalidParamsError",
    "IterVerdict", "IterationParams", "KernelAuditReport", "KernelSpec",
    "LatticeProblem", "LevelTailRecord", "LimitPair", "MaxPrincipleReport",
    "MeasureDensityReport", "ModulusReport", "MollifierSpec",
    "NewtonDivergenceError", "NlstefanError", "NonpositiveExcessError",
    "OperatorWorkspace", "Preset", "RadialCutoff", "RegularizedEnthalpy",
    "RunConfig", "ScaledEnthalpy", "SchemaViolationError", "SequenceLevel",
    "SolverConfig", "StepDiagnostics", "Trajectory", "UnresolvedBandError",
    "apply_operator", "beta_graph", "boundary_sequences", "caccioppoli_audit",
    "check_exponents", "convergence_report", "emit_run_config",
    "energy_history", "fit_log_modulus", "geometric_convergence",
    "implicit_step", "initial_sequences", "interior_sequences",
    "intrinsic_theta", "kernel_audit", "lemma_iter_epsilon",
    "lemma_iter_verify", "level_set_fraction", "limit_pair", "load_preset",
    "max_principle_check", "measure_density", "modulus_ladder",
    "normalization_constant", "normalize", "oscillation", "oscillation_scale",
    "parse_run_config", "phi_p", "realize", "run_family",
    "sequence_tail_report", "solve", "space_time_bump", "tail",
    "truncate_opposite", "weak_residual",
]
