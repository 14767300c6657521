"""bridgelab: numerical experiments on pinned Langevin diffusions.

The library quantitatively verifies, at desk scale, the structural facts
of Langevin bridges: the curvature field that characterizes all bridges of
a potential, the path-weight representation of bridge drifts, hyperbolic
coupling envelopes and gradient estimates, the path-space inner product
with its concentration consequences, Stein-type W1 bounds, ground-state
invariant measures with Wasserstein contraction, and projections onto the
endpoint-factorizing class of discrete path measures.
"""

from .bridges import (BridgeProblem, DiscretizedPath, bridge_drift_estimate,
                      estimate_psi, exact_drift_for, ou_bridge_drift,
                      ou_bridge_mean, ou_bridge_variance, pinned_fluctuations,
                      reverse_path, sample_reciprocal_mixture,
                      simulate_bridge, simulate_bridge_batch, time_grid)
from .couplings import (CoupledPaths, couple_comparison_1d,
                        couple_synchronous, coupling_bound_envelope,
                        envelope_coefficients, envelope_report,
                        verify_gradient_estimate)
from .errors import (AbsoluteContinuityError, BatchError, BridgeLabError,
                     ConfigError, EvaluationError, InfeasibleError,
                     PreconditionError, SimulationError, SolverError,
                     UnsupportedFunctionalError)
from .hyperbolic import coth, csch, log_sinh, sech_ratio, sinh_ratio
from .invariant import (ContractionReport, DecorrelationReport,
                        DiscreteDistribution, GroundState, choose_domain,
                        contraction_coefficient, endpoint_wasserstein,
                        gaussian_endpoint_decorrelation,
                        ground_state_for_model, sample_bridge_marginal,
                        solve_ground_state, verify_contraction,
                        verify_marginal_convergence)
from .mcengine import (MCValue, SampleStats, bootstrap_wasserstein,
                       empirical_tail, parallel_map, run_batches, stream,
                       wasserstein_1d, wilson_interval)
from .pathspace import (AlphaInnerProduct, GridFunction, SimpleFunctional,
                        cached_operator, indicator_phi, inner_product_alpha,
                        malliavin_derivative, solve_phi, verify_concentration,
                        verify_covariance_identity, xi_alpha)
from .potentials import (ConvexityCertificate, PotentialModel,
                         convexity_certificate, from_callable, make_potential,
                         polynomial_model, quadratic_model,
                         reciprocal_characteristic,
                         reciprocal_characteristic_via_generator,
                         reciprocal_potential, sine_model, zero_model)
from .projection import (DiscretePathMeasure, ProjectionResult,
                         build_reference, endpoint_residual, project_convex,
                         project_entropic, simplex_oracle,
                         verify_endpoint_measurability)
from .stein import (SteinContext, SteinReport, default_battery,
                    estimate_stein_constant, generator_apply,
                    semigroup_apply, verify_generator_identities,
                    verify_stein_bound)

__version__ = "0.1.0"
