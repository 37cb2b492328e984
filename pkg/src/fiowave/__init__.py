"""Propagators for variable-coefficient hyperbolic PDEs built from
discretized pseudo-differential and Fourier integral operator calculus,
with a stochastic layer for random-field solutions driven by spatially
correlated Gaussian noise.

The pipeline: reduce the second-order operator to a first-order system
(reduction), diagonalize it, solve the eikonal equations for the phases
(eikonal), build the truncated propagator series (propagator, or the
multiplier backend for x-independent symbols), assemble the solution
operators, and drive the stochastic layer (measures, stochastic) on
top.  The wave module carries the closed-form oracle everything is
tested against; the weak module is the degenerate model problem.
"""

from .grid import Field, Grid, forward_ft, inverse_ft, japanese_bracket, sample
from .symbols import (SampleCloud, Symbol, SymbolMatrix, adjoint_symbol,
                      compose_fio_pdo, compose_pdo, diagonalizer, seminorm)
from .operators import GridOperator, multiplier_operator, sobolev_norm
from .phases import PhaseFunction, pdo_phase, quadrature_phase, wave_phase
from .eikonal import CharacteristicsPhase, phase_residual, solve_eikonal
from .reduction import (Coefficient, FirstOrderSystem, HyperbolicOperator,
                        characteristic_roots, diagonalize, reduce_to_system,
                        strictness_margin)
from .propagator import (Propagator, SolutionOperators, W1Action,
                         assemble_solution_ops, build_propagator, duhamel_solve,
                         residual_w1)
from .multiplier import (MultiplierPropagator, MultiplierSolutionOperators,
                         MultiplierSystem, constant_coefficient_system,
                         duhamel_solve_multiplier, system_from_first_order)
from .measures import DalangReport, SpectralMeasure, dalang_integral
from .stochastic import (CoefficientPair, NoiseRealization, RandomFieldSample,
                         check_a1, check_a3, continuity_modulus,
                         pathwise_convolution, random_field_solution,
                         sample_noise, second_moment_bound,
                         stochastic_convolution)
from .weak import (WeakHypConfig, WeakSymbols, build_weak_system, estimate_delta,
                   integral_inequality, verify_lemma_42_43)
from .wave import WaveOracle, cosine_ft, fundamental_ft, wave_ops

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
