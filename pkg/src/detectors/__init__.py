"""
Detectors module - aggregators over per-layer embeddings

This module provides:
- RawTapSource / UcanSource: interchangeable embedding sources
- DknnDetector: k-NN nonconformity with conformal credibility
- rbf_svm_fit / DnrDetector: per-layer RBF-SVMs with a combiner
- SadDetector: max-softmax baseline
- calibrate_threshold / Verdict: max-F1 thresholds and per-input verdicts
- save_detector / load_detector: detector artifacts
"""

from src.detectors.base import ADVERSARIAL, BENIGN, Detector, Verdict, make_verdict
from src.detectors.sources import EmbeddingSource, RawTapSource, UcanSource, source_from_description
from src.detectors.dknn import (
    CalibrationStore,
    DknnDetector,
    batch_tag,
    conservative_p_values,
    dknn_build,
    dknn_score,
    nearest_neighbors,
    smoothed_p_values,
)
from src.detectors.svm import RbfSvm, default_gamma, rbf_kernel, rbf_svm_fit
from src.detectors.dnr import DnrDetector, dnr_score, dnr_train
from src.detectors.sad import SadDetector, sad_score
from src.detectors.threshold import ThresholdResult, calibrate_threshold
from src.detectors.persistence import load_detector, save_detector

DETECTOR_KINDS = ("dknn", "dnr", "sad")
SOURCE_KINDS = ("raw", "ucan")

__all__ = [
    "ADVERSARIAL",
    "BENIGN",
    "Detector",
    "Verdict",
    "make_verdict",
    "EmbeddingSource",
    "RawTapSource",
    "UcanSource",
    "source_from_description",
    "CalibrationStore",
    "DknnDetector",
    "conservative_p_values",
    "dknn_build",
    "dknn_score",
    "nearest_neighbors",
    "batch_tag",
    "smoothed_p_values",
    "RbfSvm",
    "default_gamma",
    "rbf_kernel",
    "rbf_svm_fit",
    "DnrDetector",
    "dnr_score",
    "dnr_train",
    "SadDetector",
    "sad_score",
    "ThresholdResult",
    "calibrate_threshold",
    "load_detector",
    "save_detector",
    "DETECTOR_KINDS",
    "SOURCE_KINDS",
]
