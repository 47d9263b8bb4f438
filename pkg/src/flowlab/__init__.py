"""flowlab: Monte Carlo and PDE toolkit for stochastic flows of SDEs with
super-linear growth and locally singular coefficients."""

from .coefficients import (AuditReport, AuditUnavailableError,
                           CoefficientField, GrowthProfile,
                           PresetNotFoundError, SdeProblem, from_expressions,
                           list_presets, preset)
from .integrators import (BundleCoupling, ConfigError, PathEnsemble,
                          SimulationConfig, coupled_difference,
                          coupled_simulate, first_exit, simulate,
                          simulate_bundle)
from .lyapunov import (LyapunovSpec, MomentReport, exp_moment_check,
                       poly_moment_check, steering_contraction_check,
                       supermartingale_test)
from .flow_regularity import (FlowDerivativeEstimate, QuotientNorm,
                              SobolevWitness, fd_gradient,
                              lipschitz_witness_check, maximal_function,
                              quotient_norm, witness_fit)
from .occupation import (KhasminskiiReport, OccupationEstimate,
                         exp_occupation_check, khasminskii_check,
                         krylov_ratio, local_exp_occupation_check,
                         occupation_integral)
from .zvonkin import (DriftSplit, PdeGridSpec, PdeSolution, ZvonkinTransform,
                      build_transform, conjugacy_check, solve_backward_pde,
                      solve_with_smallness, split_drift)
from .markov_stats import (BoundedFunction, HittingEstimate,
                           SemigroupProfile, feller_refinement_check,
                           girsanov_hitting, hitting_probability,
                           semigroup_map)

__version__ = "0.1.0"
