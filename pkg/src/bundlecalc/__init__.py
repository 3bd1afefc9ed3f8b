"""Covariant derivatives, formal adjoints and Bochner Laplacians on vector bundles
over chart manifolds, with quadrature-based residual checks of the integral
identities that relate them."""

from .bundle import (BundleCurvature, BundleData, bundle_curvature, compatibility_residual,
                     conformal, fiber_metric_equivalence_constants, make_bundle, rot2,
                     trivial_bundle)
from .calculus import (OperatorContext, bochner_laplacian, bochner_power,
                       bochner_power_trace_form, context_for, covariant_derivative,
                       formal_adjoint, formal_adjoint_divergence_form, interior_normal,
                       iterated_derivative, metric_trace, trace_nabla)
from .errors import (BundleCalcError, CapabilityError, ConfigError, DegeneracyError,
                     DomainError, ParameterError, PreconditionError, ShapeError)
from .fields import (SectionSpec, TensorSection, make_bump_section, make_section,
                     make_smooth_section, make_trig_section, pointwise_inner, pointwise_norm,
                     section_from_expressions, section_from_function)
from .geometry import (BoundaryFace, ChartManifold, CurvatureData, annulus, boundary_data,
                       christoffel_jet, curvature, flat_torus, interval, inverse_metric_jet,
                       make_manifold, metric_jet, sphere_chart, sqrt_det_jet, warped_torus2)
from .jets import Jet, JetField
from .quadrature import (FaceGrid, QuadratureGrid, face_grids, integrate, integrate_boundary,
                         make_grid, refine)
from .verify import (NormReport, ResidualReport, calibrate_ricci_sign, check_adjoint_pairing,
                     check_commutator, check_divergence_identity, check_green, check_ibp,
                     component_norm_ratio, norm_equivalence_report, sobolev_norm,
                     structured_norm)

__version__ = "0.1.0"
