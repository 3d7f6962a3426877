"""Influence indices: how much one interpretable feature drives the prediction.

The per-feature ratio compares the true class's probability before and after
blurring that feature (>1: the feature supported the class, <1: it worked
against it). The precision index divides that ratio by the prediction-weighted
average of the per-class ratios, measuring how specific the feature's
influence is to the true class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .perturbation import BlurConfig, FeatureMask, apply_masked_blur

logger = logging.getLogger(__name__)

CATEGORY_POSITIVE = "positive"
CATEGORY_NEUTRAL = "neutral"
CATEGORY_NEGATIVE = "negative"


@dataclass(frozen=True)
class InfluenceConfig:
    """Numerical guards for the index arithmetic.

    epsilon floors perturbed probabilities before division so ratios stay
    finite; neutral_band is the closed interval around 1 whose ratios count
    as neutral.
    """

    epsilon: float = 1e-7
    neutral_band: tuple[float, float] = (0.9, 1.1)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        lo, hi = self.neutral_band
        if not lo <= 1.0 <= hi:
            raise ValueError(f"neutral_band must contain 1, got {self.neutral_band}")


@dataclass
class FeatureInfluence:
    """Per-feature influence record produced by analyze_feature."""

    feature_id: int
    p_true_original: float
    p_true_perturbed: float
    ir: float
    ir_per_class: np.ndarray
    irp: float
    category: str


def ir_index(
    p_original: float, p_perturbed: float, config: InfluenceConfig = InfluenceConfig()
) -> float:
    """Ratio of the original class probability to the perturbed one.

    Returns 0 when the class had zero probability to begin with. The
    denominator is floored at config.epsilon, so the value ranges in
    [0, p_original / epsilon].
    """
    if not 0.0 <= p_original <= 1.0 or not 0.0 <= p_perturbed <= 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    if p_original == 0.0:
        return 0.0
    return p_original / max(p_perturbed, config.epsilon)


def classwise_ir(
    p_original: np.ndarray,
    p_perturbed: np.ndarray,
    config: InfluenceConfig = InfluenceConfig(),
) -> np.ndarray:
    """Vectorized ir_index over every class of a prediction vector."""
    orig = np.asarray(p_original, dtype=np.float64)
    pert = np.asarray(p_perturbed, dtype=np.float64)
    if orig.shape != pert.shape:
        raise ValueError(f"shape mismatch: {orig.shape} vs {pert.shape}")
    ratios = orig / np.maximum(pert, config.epsilon)
    return np.where(orig == 0.0, 0.0, ratios)


def irp_index(
    ir_per_class: np.ndarray,
    weights,
    true_class: int,
    config: InfluenceConfig = InfluenceConfig(),
) -> float:
    """True class ratio over the weighted average of all class ratios.

    Weights are the ORIGINAL image's class probabilities. If the weighted
    average degenerates below epsilon the index is 0 (flagged in the log).
    """
    ir = np.asarray(ir_per_class, dtype=np.float64)
    w = np.asarray(getattr(weights, "probabilities", weights), dtype=np.float64)
    if ir.shape != w.shape:
        raise ValueError(f"length mismatch: {ir.shape[0]} ratios vs {w.shape[0]} weights")
    if not 0 <= true_class < ir.shape[0]:
        raise ValueError(f"true_class {true_class} out of range for {ir.shape[0]} classes")
    weighted_avg = float(np.dot(w, ir)) / float(w.sum())
    if weighted_avg < config.epsilon:
        logger.warning(
            "degenerate precision index: weighted average of class ratios is %.3g", weighted_avg
        )
        return 0.0
    return float(ir[true_class]) / weighted_avg


def categorize(ir: float, config: InfluenceConfig = InfluenceConfig()) -> str:
    """Map a ratio to positive/neutral/negative; values exactly on a band edge are neutral."""
    lo, hi = config.neutral_band
    if ir > hi:
        return CATEGORY_POSITIVE
    if ir < lo:
        return CATEGORY_NEGATIVE
    return CATEGORY_NEUTRAL


def analyze_feature(
    model,
    image: np.ndarray,
    mask: FeatureMask,
    true_class: int,
    blur_config: BlurConfig = BlurConfig(),
    influence_config: InfluenceConfig = InfluenceConfig(),
    original_prediction=None,
) -> FeatureInfluence:
    """Blur one feature, re-predict, and compute its influence record.

    The model only needs a ``predict(image)`` method returning a prediction
    vector. Pass original_prediction to avoid re-predicting the unperturbed
    image (the pipeline does, keeping the budget at one predict per feature).
    An empty mask leaves the image untouched and is neutral by definition:
    ir = 1, irp = 1, regardless of the raw probabilities.
    """
    if original_prediction is None:
        original_prediction = model.predict(image)
    p_orig = np.asarray(original_prediction.probabilities, dtype=np.float64)

    perturbed_image = apply_masked_blur(image, mask, blur_config)
    perturbed = model.predict(perturbed_image)
    p_pert = np.asarray(perturbed.probabilities, dtype=np.float64)

    ratios = classwise_ir(p_orig, p_pert, influence_config)
    if mask.empty:
        return FeatureInfluence(
            feature_id=mask.feature_id,
            p_true_original=float(p_orig[true_class]),
            p_true_perturbed=float(p_orig[true_class]),
            ir=1.0,
            ir_per_class=ratios,
            irp=1.0,
            category=CATEGORY_NEUTRAL,
        )
    ir = float(ratios[true_class])
    irp = irp_index(ratios, p_orig, true_class, influence_config)
    return FeatureInfluence(
        feature_id=mask.feature_id,
        p_true_original=float(p_orig[true_class]),
        p_true_perturbed=float(p_pert[true_class]),
        ir=ir,
        ir_per_class=ratios,
        irp=irp,
        category=categorize(ir, influence_config),
    )
