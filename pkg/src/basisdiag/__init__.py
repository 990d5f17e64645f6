"""Numerical diagnostics for rank-one perturbations of Volterra operators.

The package discretizes a model ``K = B + (., f) g`` with ``B`` the integration
operator, evaluates the Fredholm determinant ``phi(z) = 1 - z (g(z), f)``,
finds its zeros, and runs checks on the eigenfunction families of
``A = K^{-1}``: weights and the A2 condition, the Carleson condition, Gram
frame bounds, uniform minimality, resolvent growth and weighted resolvent
estimates.
"""

__version__ = "0.1.0"

from .errors import DiagnosticError  # noqa: E402
from .model import (  # noqa: E402
    GridFunction,
    PerturbedModel,
    VolterraOperator,
    build_integration_operator,
    make_grid,
    quasi_exponential,
    resolvent_A,
    resolvent_B,
    resolvent_B_square_integral,
    semigroup_apply,
    vector_from_tag,
)
from .detfun import (  # noqa: E402
    DetFunction,
    Spectrum,
    estimate_indicator,
    eval_phi,
    find_spectrum,
    indicator_data,
    product_reconstruction,
    width_positivity_check,
)
from .weights import (  # noqa: E402
    WeightTrace,
    a2_check,
    delta_eval,
    integrability_check,
    synthetic_trace,
    trace_W,
    trace_w,
    trace_w_star,
)
from .basis import (  # noqa: E402
    EigenFamily,
    ExponentialFamily,
    biorthogonality_residuals,
    carleson_constant,
    estimate_suite,
    expansion_residual,
    frame_report,
    lrg_sample,
    right_regularity_bounds,
    uniform_minimality,
)
from .harness import emit, load_scenario, run_pipeline  # noqa: E402
