"""Variational calculus on closed (holonomic) measures.

Atomic measures on phase space, analytic probe bases, closedness and
invariance residuals, variation-derivative pairings, second-derivative
estimation and lifting, and occupation-measure action minimization.
"""

from .action_lp import GridSpec, LPProblem, MinActionResult, build_lp, solve_min_action
from .closed_velocity import (LiftedMeasure, estimate_second_derivative, lift,
                              verify_lift, weak_equation_defects)
from .domain import Domain, PhasePoint
from .dynamics import (ELField, Lagrangian, el_flow, el_residual_along_curve,
                       el_vector_field, energy, invariance_defect,
                       invariance_residual, make_lagrangian)
from .errors import (BasisConstructionError, FlowEscapeError, HolovarError,
                     InvalidInputError, LPInfeasibleError, SingularHessianError,
                     UnsupportedSettingError)
from .fields import (BaseVectorField, FiberVectorField, SecondDerivativeField,
                     fiber_field_from_base, fiber_field_from_callable,
                     fiber_field_from_solve, translation_bump_field)
from .measures import (AtomicMeasure, CurveSamples, closedness_residual,
                       convex_combination, from_curve, gauss_curve_measure,
                       gauss_times, pushforward_horizontal, sample_curve,
                       tensor_density_measure)
from .probes import (Jet2, TestBasis, TestFunction, combine, jet, jet_many,
                     lift_differential, make_basis, monomial, time_sine_probe)
from .reports import DefectReport
from .scenarios import SCENARIOS, ScenarioReport
from .variations import (CertificateReport, ExactHorizontalVariation,
                         FiberHessianVariation, TranspositionalVariation,
                         VectorFieldVariation, deformability_residual,
                         exactness_residual, fiber_hessian_obstruction,
                         fiber_translation, graph_support_check,
                         horizontal_criticality_residual,
                         horizontal_variation_from_base,
                         minimizable_certificate_check, pair,
                         pair_with_lagrangian, theta1_residual, theta2_residual,
                         vertical_variation)

__version__ = "0.1.0"
