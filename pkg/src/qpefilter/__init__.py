"""Window-function QPE filters: responses, leakage, QETU comparison and two-step spectra."""

from .filter_response import (
    FilterConfig,
    FilterCurve,
    KaiserFilterParams,
    filter_curve,
    kaiser_params,
    measure_transition,
    renormalization,
    renormalization_many,
)
from .gibbs_sigma import (
    SigmaFactor,
    StepDft,
    reconstruct_filter,
    sigma_closed_form,
    sigma_factor,
    sigma_limit,
    step_dft,
)
from .grid_windows import QpeGrid, Window, WindowKind, bessel_i0, make_grid, make_window
from .qetu_minimax import (
    ChebyshevEvenPoly,
    FitReport,
    KaiserDesign,
    NoFitFound,
    QetuSpec,
    certify,
    fit_polynomial,
    fitting_grid,
    kaiser_design,
    minimal_degree,
    queries_qpe_kaiser,
)
from .qpe_response import (
    ResponseCurve,
    amplitude,
    amplitude_closed_form,
    amplitudes_many,
    kaiser_eps_max,
    leakage_outside_top,
    probabilities_many,
    tail_decay_exponent,
)
from .spectral_pipeline import (
    SpectralResult,
    Spectrum,
    SpectrumError,
    StageConfig,
    TwoStepConfig,
    alias_peaks,
    error_decomposition,
    estimator,
    load_spectrum,
    query_counts,
    two_step,
)
from .statevector_oracle import JointState, build_state, inverse_qft_matrix, postselect_expectation

__version__ = "0.1.0"
