"""SNR-aware training-set selection for wireless source identification.

Given a test-SNR estimate, train compact classifiers on synthetic
modulated baseband frames using single-SNR selection, greedy SNR
boosting, or SNR bagging, and quantify accuracy/training-time trade-offs.
"""

from .errors import ConfigurationError, DataError, OutputError, SnrselError
from .features import FeatureStats, PipelineConfig, fit_stats, to_feature, transform
from .learner import (
    ArchConfig,
    ConvFrontConfig,
    Model,
    TrainConfig,
    TrainRecord,
    evaluate,
    forward,
    init_model,
    loss_and_grad,
    predict,
    train,
)
from .sigsynth import (
    Dataset,
    DatasetSpec,
    Frame,
    ImpairmentConfig,
    ModType,
    SnrGrid,
    apply_awgn,
    apply_impairments,
    build_dataset,
    generate_frame,
    generate_symbols,
    pulse_shape,
)
from .strategies import (
    BoostResult,
    DataView,
    Ensemble,
    SensitivityTable,
    Split,
    bagging_train,
    ensemble_predict,
    majority_vote,
    make_split,
    offset_sensitivity,
    select_single_snr,
    select_uniform_fraction,
    snr_boost,
    train_on_snr_set,
)

__version__ = "0.1.0"
