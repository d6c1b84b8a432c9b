"""ECG biometric pipeline: synthetic data, pre-processing, R-peak slicing,
control-chart data quality and template authentication."""

__version__ = "0.1.0"

from .auth import (
    UNKNOWN,
    AuthConfig,
    AuthDecision,
    Evaluation,
    ReferenceDb,
    ReferenceTemplate,
    authenticate,
    enroll,
    evaluate,
    read_refdb,
    write_refdb,
)
from .errors import (
    CompatibilityError,
    EcgError,
    EnrollmentError,
    NumericalError,
    RecordDataError,
    RecordFormatError,
    UnknownSubjectError,
    ValidationError,
)
from .preprocess import (
    BaselineConfig,
    PreprocessConfig,
    SpectralCleanConfig,
    baseline_adjust,
    detect_flip,
    remove_frequencies,
    remove_spectral_peaks,
)
from .quality import (
    ControlLimits,
    Metric,
    QualityConfig,
    QualityReport,
    apr,
    apu,
    control_limits,
    maer,
    mse,
    quality_gate,
    sigma_of_b,
)
from .record import EcgRecord, SliceWindow, TimeSlicedDataset, UseCaseCategory, read_record, write_record
from .slicing import RPeakConfig, detect_r_peaks, read_slices, slice_record, write_slices
