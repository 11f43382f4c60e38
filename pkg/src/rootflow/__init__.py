"""Root dynamics of trigonometric polynomials under differentiation and the
nonlocal transport equation that describes them in the large-degree limit."""

__version__ = "0.1.0"

from .spectral import (  # noqa: E402
    CumulativeDensity,
    GridFunction,
    extremum_inequality_check,
    interpolate,
    invert_cdf,
    multiplier_transform,
)
from .trigpoly import (  # noqa: E402
    RootConfiguration,
    derivative_roots_oracle,
    differentiate_roots,
    evaluate_product,
    log_derivative_sum,
)
from .pde import ObservableRecord, PdeState, evolve_to, observables, rhs, step  # noqa: E402
from .coupling import (  # noqa: E402
    ErrorVector,
    ExperimentConfig,
    error_vector,
    perturb_roots,
    predict_gap_split,
    quantile_init,
    run_coupled,
)
from .kernel import F_bound, KernelRow, kappa_row, mean_compatibility  # noqa: E402
