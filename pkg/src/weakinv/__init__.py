"""weakinv: numerical classification of dynamical-system symmetries.

Classifies vector fields and diffeomorphisms under Lie group actions as
strongly invariant, weakly invariant (recovering the group-side field or
automorphism), partially symmetric, or asymmetric, and decomposes weakly
invariant systems into a quotient subsystem driving a group-affine one.
"""

__version__ = "0.1.0"

from .sampling import SamplingPlan
from .reporting import CheckResult, Tolerances
from .groups import (AlgebraVector, GroupElement, LieGroupDescriptor, TangentVectorG,
                     VectorFieldG, adjoint, check_group_linear, compose, d_left,
                     d_right, direct_product, exp, group_affine_field,
                     inner_derivation_field, inverse, left_invariant_field,
                     left_trivialize, log, se2, se3, so2, so3, translation_group,
                     zero_field_g)
from .actions import (GroupAction, ManifoldDescriptor, ManifoldPoint, TangentVectorM,
                      VectorFieldM, affine_field, cascade_synthetic_field,
                      check_action_axioms, check_differentials, check_free,
                      euclidean, field_from_group_field, generator_matrix,
                      group_affine_field_m, group_manifold,
                      infinitesimal_generator, left_action,
                      left_invariant_field_m, radial_scaled_field,
                      rotation_action, scaling_action, special_euclidean_action,
                      translation_action)
from .invariance import (Diffeomorphism, GroupMap, InvarianceReport, RecoveryError,
                         check_automorphism, classify_diffeomorphism,
                         classify_vector_field, recover_group_map_at,
                         recovered_group_map, residual_field, solve_group_velocity)
from .flows import (DivergenceError, FlowHandle, IntegratorConfig,
                    check_flow_weak_invariance, check_group_map_is_flow,
                    check_small_time_extension, differentiate_flow_at_zero,
                    export_trajectory, flow, flow_diffeomorphism, integrate,
                    recovered_map_of_flow)
from .cascade import (BundleChart, CascadeSystem, QuotientPoint, QuotientTangent,
                      build_cascade, check_group_affine, check_well_definedness,
                      export_cascade_run, forcing_term, group_affine_decompose,
                      identity_section_chart, induced_quotient_field,
                      integrate_cascade, radial_chart, reconstruct,
                      translation_chart)
