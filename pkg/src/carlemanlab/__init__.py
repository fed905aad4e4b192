"""Desk-scale numerical laboratory for Carleman-weighted Schrodinger
inverse problems: weight checks, a Crank-Nicolson solver, both sides of the
Carleman energy inequality, and stability experiments for source and
zero-order coefficient reconstruction."""

from .analytic import (CoefficientSpec, SolutionSpec, WeightSpec,
                       coefficient_preset, weight_preset)
from .geometry import (AssumptionReport, CoefficientSet, SpaceTimeGrid,
                       SpatialDomain, build_grid, interval, outward_normal,
                       rectangle, sample_coefficients, validate_assumptions)
from .symbols import (Covector, PseudoconvexityReport, WeightFunction,
                      bracket_closed_form, bracket_oracle, check_boundary_sign,
                      check_convexity_condition, derivative_form,
                      estimate_garding_constant, find_min_lambda,
                      principal_symbol, pseudoconvexity_report, quad_form)
from .solver import (BoundaryTrace, DataVector, GridFunction, SourceForwardMap,
                     adjoint_apply, apply_operator, manufactured_source,
                     neumann_trace, solve_ivp)
from .carleman import (CarlemanReport, CarlemanWeights, apply_conjugated_operators,
                       build_weights, carleman_budget, carleman_sweep,
                       elliptic_slice_check, energy_identity_check, h3_tau_norm)
from .inversion import (InverseData, StabilityReport, coefficient_reduction,
                        reconstruct_source, reconstruction_noise_sweep,
                        stability_pair_ratio, stability_sweep, synthesize_data,
                        verify_transformation)

__version__ = "0.1.0"
