"""Bayesian design, evaluation and simulation of pooled diagnostic tests."""

from .model import (
    CapExceeded,
    DEFAULT_CAPS,
    DiagnosisReport,
    EnumerationCaps,
    PoolTestError,
    Prior,
    SecretDistribution,
    TestSpec,
    ZeroProbabilityOutcome,
    conditional_entropy,
    diagnose,
    entropy,
    expected_confidence,
    marginals,
    mask_from_string,
    mask_to_string,
    ml_diagnosis,
    mutual_information,
    outcome_likelihood,
    positive_prob,
    posterior,
    prior_to_distribution,
)

__version__ = "0.1.0"
