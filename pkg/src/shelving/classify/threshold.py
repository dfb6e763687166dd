"""Single-threshold discrimination on a scalar statistic (bright iff value > threshold)."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..mc import Label


@dataclass(frozen=True)
class ThresholdModel:
    threshold: float
    orientation: str = "bright-above"

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise ValueError("threshold must be finite")

    def to_json(self):
        return json.dumps({"threshold": self.threshold, "orientation": self.orientation})

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def _split(values, labels):
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels)
    if values.shape != labels.shape:
        raise ValueError("values and labels differ in length")
    dark = np.sort(values[labels == Label.DARK])
    bright = np.sort(values[labels == Label.BRIGHT])
    if len(dark) == 0 or len(bright) == 0:
        raise ValueError("calibration needs both dark and bright samples")
    return values, dark, bright


def threshold_candidates(values) -> np.ndarray:
    """Midpoints of sorted unique values, plus one candidate beyond each end."""
    u = np.unique(values)
    return np.concatenate(([u[0] - 1.0], 0.5 * (u[1:] + u[:-1]), [u[-1] + 1.0]))


def threshold_errors(dark_sorted, bright_sorted, thresholds):
    """(eps_d, eps_b) for each threshold, given class samples sorted ascending."""
    eps_d = 1.0 - np.searchsorted(dark_sorted, thresholds, side="right") / len(dark_sorted)
    eps_b = np.searchsorted(bright_sorted, thresholds, side="right") / len(bright_sorted)
    return eps_d, eps_b


def fit_threshold(values, labels) -> ThresholdModel:
    """
    Exhaustive scan minimising (eps_d + eps_b)/2 over all candidate
    thresholds; ties go to the larger threshold.
    """
    values, dark, bright = _split(values, labels)
    cand = threshold_candidates(values)
    nd, nb = len(dark), len(bright)
    # eps scaled by 2 * nd * nb, kept in integers so ties are exact
    miss_d = nd - np.searchsorted(dark, cand, side="right")
    miss_b = np.searchsorted(bright, cand, side="right")
    score = miss_d.astype(np.int64) * nb + miss_b.astype(np.int64) * nd
    best = np.flatnonzero(score == score.min())[-1]
    return ThresholdModel(float(cand[best]))


def classify_threshold(model: ThresholdModel, value):
    """Label.BRIGHT iff value > threshold; works elementwise on arrays."""
    out = np.asarray(value) > model.threshold
    if out.ndim == 0:
        return Label.BRIGHT if out else Label.DARK
    return out.astype(np.int8)
