"""Out-of-distribution detection from raw classifier logits.

Fits a correct-class and a wrong-class Gaussian to every output neuron,
turns logits into bounded per-class probability scores and interprets the
score vector as a Green / Yellow / Red verdict. Max-softmax and energy
baselines, validation-based threshold calibration and evaluation helpers
are included.
"""

from .calibration import (
    CalibrationResult,
    CalibrationSpec,
    SweepRow,
    baseline_sweep,
    calibrate_baseline,
    calibrate_baseline_on,
    calibrate_psi,
    default_grid,
    misclassified_subset,
    neglog_grid,
    select_best,
    threshold_sweep,
)
from .core import (
    OOD,
    SIGMA_FLOOR,
    UNKNOWN,
    ClassScoreFunction,
    Dataset,
    DetectorModel,
    GaussianStats,
    LabeledSample,
    fit_gaussian,
    fit_model,
    probability_score,
    probability_scores,
    ps_matrix,
    ps_vector,
)
from .detectors import (
    BaselineConfig,
    BaselineKind,
    Code,
    DetectorDecision,
    Subtype,
    Verdict,
    energy_detect,
    energy_detect_batch,
    energy_score,
    interpret,
    interpret_batch,
    max_softmax_detect,
    max_softmax_detect_batch,
    psi_detect,
    psi_detect_batch,
    softmax,
)
from .evaluation import EvalReport, distribution_report, evaluate, weighted_accuracy
from .synth import SynthSpec, generate
from . import io

__version__ = "0.1.0"
