"""Second order dynamic equations as geodesic flows of tangent bundle connections."""

__version__ = "0.1.0"

from .core_tensor import ChartPoint, FieldArray, FrameMap, ScalarField, Tensor, TangentVector, boost_frame, contract, rotation_frame
from .dynamics import (
    DynamicConnectionField,
    DynamicEquationField,
    QuadraticCoefficients,
    ReferenceFrameField,
    gamma_from_xi,
    is_symmetric,
    xi_from_gamma,
)
from .errors import (
    ContractError,
    EvaluationError,
    FrameError,
    GeoflowError,
    IntegrationError,
    MetricError,
    NumericError,
    ParseError,
    ValidationError,
    VarianceError,
)
from .geodesic_flow import (
    IntegratorConfig,
    find_conjugate_points,
    index_form,
    integrate_geodesic,
    integrate_jacobi,
    scan_conjugate_points,
    sectional_scalar,
)
from .newtonian import (
    LagrangianCoefficients,
    compatibility_residual,
    extend_mass_metric,
    lagrange_equation,
    lagrangian_connection,
    metric_from_lagrangian,
)
from .tangent_connection import (
    SolderingForm,
    TangentConnectionField,
    apply_soldering,
    connection_from_gamma,
    curvature,
    free_motion_equation,
    is_flat,
    linear_from_quadratic,
    transform_connection,
    xi_from_connection,
)
