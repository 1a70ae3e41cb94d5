"""Link-level simulator for diffusive molecular communication.

Exact Poisson arrival synthesis over a first-passage tap channel, the
standard modulation schemes under common rate/power normalization, a
detector and equalizer zoo, pilot-based channel estimation and a seeded
Monte Carlo BER harness with figure presets and a CLI.
"""

from .channel import (
    arrival_means,
    build_taps,
    cumulative_hit,
    first_hit_density,
    simulate_arrivals,
    simulate_arrivals_gaussian,
)
from .config import (
    ConfigError,
    ExperimentConfig,
    LinkSpec,
    load_preset,
    parse_config,
    preset_names,
    preset_text,
    render_config,
)
from .detection import (
    AdaptiveThresholdDetector,
    DecisionAidedDetector,
    DerivativeMaxDetector,
    DualStreamThresholdDetector,
    FeedbackMaxDetector,
    FixedThresholdDetector,
    MaxCountDetector,
    MaxSampleDetector,
    SequenceDetector,
    SequentialThresholdDetector,
    TwoStageDetector,
    matched_detector,
    optimal_threshold,
)
from .equalization import (
    DerivativeOperator,
    ab_combine,
    ab_preequalize,
    apply_difference,
    atract_precode,
    derivative_apply,
    derivative_taps,
    dfe_subtract,
    difference_matrix,
)
from .estimation import (
    EstimationError,
    LeastSquaresChannelEstimator,
    PilotBlock,
    default_pilot_bits,
    ls_channel_estimate,
    offset_sweep,
    pilot_channel_estimate,
)
from .harness import (
    BerReport,
    optimize_parameter,
    run_point,
    snr_to_noise,
    sweep,
    wilson_interval,
)
from .modulation import (
    Modulator,
    SchemeDescriptor,
    bits_per_symbol,
    bits_to_symbols,
    gmosk_patterns,
    grid_for_scheme,
    maaf_frame_map,
    modulate,
    symbols_to_bits,
)
from .results import emit_results
from .types import (
    ChannelGeometry,
    EmissionSchedule,
    NoiseModel,
    PowerBudget,
    SampleSeries,
    SamplingGrid,
    TapVector,
)

__version__ = "0.1.0"
