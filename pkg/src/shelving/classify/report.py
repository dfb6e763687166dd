"""Detection-error bookkeeping and calibration/evaluation splits."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .. import rng as rngmod
from ..mc import Label

Z95 = 1.959963984540054


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for k successes out of n."""
    if n <= 0:
        raise ValueError("need at least one trial")
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # the interval always contains p; clamp away rounding at k = 0 or n
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


def qpn_sigma(p: float, n: int) -> float:
    """Quantum projection noise of a measured probability."""
    return math.sqrt(p * (1 - p) / n)


@dataclass(frozen=True)
class ErrorReport:
    eps_d: float
    eps_b: float
    eps: float
    n_d: int
    n_b: int
    ci_d: tuple[float, float]
    ci_b: tuple[float, float]
    ci: tuple[float, float]

    @property
    def half_width(self):
        return 0.5 * (self.ci[1] - self.ci[0])

    @property
    def sigma(self):
        """Binomial standard error of eps."""
        return 0.5 * math.sqrt(self.eps_d * (1 - self.eps_d) / self.n_d + self.eps_b * (1 - self.eps_b) / self.n_b)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())

    CSV_FIELDS = ("eps_d", "eps_b", "eps", "n_d", "n_b", "ci_d_lo", "ci_d_hi", "ci_b_lo", "ci_b_hi", "ci_lo", "ci_hi")

    def csv_row(self):
        return [self.eps_d, self.eps_b, self.eps, self.n_d, self.n_b, *self.ci_d, *self.ci_b, *self.ci]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_FIELDS)
        w.writerow(self.csv_row())
        return buf.getvalue()


def error_report(predictions, labels) -> ErrorReport:
    """
    Dark error = fraction of dark-prepared trials recorded bright, and vice
    versa.  Each class gets a Wilson 95% interval; the interval on the mean
    combines the per-class distances to the interval edges in quadrature,
    separately on each side.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    dark = labels == Label.DARK
    bright = labels == Label.BRIGHT
    n_d, n_b = int(dark.sum()), int(bright.sum())
    if n_d == 0 or n_b == 0:
        raise ValueError("both dark and bright trials are required")
    k_d = int(np.count_nonzero(predictions[dark] == Label.BRIGHT))
    k_b = int(np.count_nonzero(predictions[bright] == Label.DARK))
    eps_d, eps_b = k_d / n_d, k_b / n_b
    eps = (eps_d + eps_b) / 2
    ci_d, ci_b = wilson_interval(k_d, n_d), wilson_interval(k_b, n_b)
    lo = eps - 0.5 * math.hypot(eps_d - ci_d[0], eps_b - ci_b[0])
    hi = eps + 0.5 * math.hypot(ci_d[1] - eps_d, ci_b[1] - eps_b)
    return ErrorReport(eps_d, eps_b, eps, n_d, n_b, ci_d, ci_b, (max(0.0, lo), min(1.0, hi)))


@dataclass(frozen=True)
class LabeledSplit:
    calibration: np.ndarray
    evaluation: np.ndarray
    fraction: float

    def __post_init__(self):
        if len(self.calibration) == 0:
            raise ValueError("calibration set is empty")
        if np.intersect1d(self.calibration, self.evaluation).size:
            raise ValueError("calibration and evaluation sets overlap")


def make_split(labels, fraction=0.05, seed=0, resample=0) -> LabeledSplit:
    """
    Random calibration subset holding ``fraction`` of each class
    (at least one trial per class); the rest is the evaluation set.
    Index sets are returned sorted.
    """
    labels = np.asarray(labels)
    if not 0 < fraction < 1:
        raise ValueError("calibration fraction must lie in (0, 1)")
    rng = rngmod.trial_rng(seed, resample, rngmod.SPLIT)
    cal = []
    for cls in (Label.DARK, Label.BRIGHT):
        idx = np.flatnonzero(labels == cls)
        if len(idx) == 0:
            continue
        n_cal = max(1, int(round(fraction * len(idx))))
        if n_cal >= len(idx):
            raise ValueError("too few trials to leave an evaluation set")
        cal.append(rng.choice(idx, n_cal, replace=False))
    cal = np.sort(np.concatenate(cal))
    ev = np.setdiff1d(np.arange(len(labels)), cal)
    return LabeledSplit(cal, ev, fraction)
