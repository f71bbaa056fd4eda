"""Smoothing-versus-filtering estimation bench.

Simulates desk-scale estimation of a mirror position signal probed through
an optical cavity: a resonant plant driven by a Lorentzian-peaked forcing
process, measured in white noise, closed under LQG feedback, estimated by
the frequency-domain optimal smoother, and compared against the
steady-state Kalman-Bucy filtered baseline.
"""

from .cavity import (
    CavityParams,
    QuadratureResponse,
    dc_quadrature_gain,
    equivalent_measurement_noise,
    quadrature_response,
    steady_state_output,
)
from .control import (
    ControllerRealization,
    LqgConfig,
    MarginReport,
    closed_loop_stability_margin,
    synthesize_lqg,
)
from .errors import (
    ConfigError,
    DegenerateBandError,
    DivergenceError,
    EvaluationError,
    ModelError,
    NotAPsdError,
    NumericalError,
    QuadratureError,
    ResmoothError,
    RiccatiError,
    UnsupportedDelayError,
    UnsupportedRegimeError,
)
from .estimation import (
    FilterBaseline,
    MseEstimate,
    MseReport,
    SmootherDesign,
    apply_smoother,
    design_smoother,
    error_psd,
    filtered_mse,
    improvement_factor,
    smoothed_mse,
)
from .lti import (
    RationalTransferFunction,
    StateSpaceModel,
    freq_response,
    is_stable,
    pade_delay,
    spectral_factorize,
    to_state_space,
)
from .noise import (
    NoiseSpec,
    SampledSeries,
    forcing_series,
    lorentzian_psd,
    shaping_filter,
    welch_psd,
    white_noise,
)
from .simloop import (
    CampaignResult,
    SimConfig,
    SimRecord,
    SweepPoint,
    reconstruct_vz,
    run_campaign,
    run_closed_loop,
    score_mse,
    sweep,
    zoh_discretize,
)

__version__ = "0.1.0"
