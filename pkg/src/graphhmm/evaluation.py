"""Scoring, anomaly-detection metrics, sparsity, and node clustering."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mixture import SequenceDataset, SparseMixtureModel, mixture_log_likelihood

NORMAL = "normal"
ANOMALOUS = "anomalous"

# trapezoid landed in numpy 2.0; trapz is its deprecated spelling
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class ScoredSequence:
    """Per-sequence score: average log-likelihood per timestep, so sequences
    of different lengths are comparable. Lower scores are more anomalous."""

    node: int
    length: int
    avg_log_likelihood: float
    label: Optional[str] = None


def score_dataset(model: SparseMixtureModel, dataset: SequenceDataset) -> list:
    """Score every sequence under its own node's mixture."""
    out = []
    for item in dataset.items:
        ll = mixture_log_likelihood(model, item.seq, item.node)
        out.append(ScoredSequence(node=item.node, length=item.seq.shape[0],
                                  avg_log_likelihood=ll / item.seq.shape[0],
                                  label=item.label))
    return out


def roc_auc(scores: list):
    """ROC curve and area for score-below-threshold anomaly detection.

    ``scores`` is a list of (score, label) pairs with labels "normal" or
    "anomalous". The curve sweeps a threshold over the unique score values,
    classifying scores at or below the threshold as anomalous; tied scores
    move as one step, so ties across classes produce diagonal segments and
    the trapezoidal area counts them at half weight. Both classes must be
    present. Returns (curve, auc) where curve is a list of (fpr, tpr) points
    from (0, 0) to (1, 1).
    """
    values = []
    labels = []
    for i, (score, label) in enumerate(scores):
        if label not in (NORMAL, ANOMALOUS):
            raise ValueError(f"scores[{i}]: label must be 'normal' or 'anomalous', "
                             f"got {label!r}")
        if not np.isfinite(score):
            raise ValueError(f"scores[{i}]: score must be finite, got {score!r}")
        values.append(float(score))
        labels.append(label)
    values = np.array(values)
    anom = np.array([lab == ANOMALOUS for lab in labels])
    n_anom = int(anom.sum())
    n_norm = len(labels) - n_anom
    if n_anom == 0 or n_norm == 0:
        raise ValueError("roc_auc needs at least one normal and one anomalous score")
    curve = [(0.0, 0.0)]
    for v in np.unique(values):
        flagged = values <= v
        fpr = float(np.sum(flagged & ~anom)) / n_norm
        tpr = float(np.sum(flagged & anom)) / n_anom
        curve.append((fpr, tpr))
    fprs = np.array([p[0] for p in curve])
    tprs = np.array([p[1] for p in curve])
    auc = float(_trapezoid(tprs, fprs))
    return curve, auc


def relative_sparsity(model: SparseMixtureModel, threshold: float = 0.0) -> float:
    """Fraction of mixing coefficients at or below the threshold.

    The default counts exact zeros, which only the score-parameterized
    training mode produces; for closed-form-trained models pass a small
    threshold (e.g. 1e-6) and report it as the thresholded variant.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    return float(np.count_nonzero(model.alpha <= threshold) / model.alpha.size)


def cluster_assignments(model: SparseMixtureModel) -> np.ndarray:
    """Dominant component per node, 1-based; ties resolve to the lowest index."""
    return np.argmax(model.alpha, axis=1) + 1
