"""
Time-resolved maximum-likelihood discrimination from subbinned counts.

Under each hypothesis the ion may make at most one leak during the window.
If the leak falls in subbin j the rate is the starting rate before j, the
final rate after j, and the mean of the two inside j.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from ..mc import Label, Protocol, ProtocolConfig


@dataclass(frozen=True)
class SubbinModel:
    k: int
    delta: float
    lam_bright: float
    lam_dark: float
    tau_B: float = math.inf
    tau_D: float = math.inf
    prior_bright: float = 0.5
    bright_leak: bool = True
    dark_leak: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("need at least one subbin")
        if not self.delta > 0:
            raise ValueError("subbin duration must be positive")
        if self.lam_bright < 0 or self.lam_dark < 0:
            raise ValueError("expected counts must be non-negative")
        if not 0 <= self.prior_bright <= 1:
            raise ValueError("prior must lie in [0, 1]")
        if not (self.tau_B > 0 and self.tau_D > 0):
            raise ValueError("leak times must be positive")

    @classmethod
    def for_protocol(cls, config: ProtocolConfig, k: int, window: float | None = None, **kw):
        """
        Model whose rates and leak times follow a simulated protocol.

        For D5/2 shelving the dark->bright leak time is the shelf lifetime
        divided by its S1/2 branching fraction.
        """
        window = config.detection_time if window is None else window
        delta = window / k
        lam_b = (config.R_bright + config.R_bg) * delta
        lam_d = config.R_bg * delta
        if config.kind is Protocol.STANDARD:
            tau_B, tau_D = config.tau_B, config.tau_D
        elif config.kind is Protocol.D52_SHELVED:
            c = config.constants
            tau_B = math.inf
            tau_D = c.lifetime(config.shelf_level) / c.s_branch(config.shelf_level)
        else:
            tau_B = tau_D = math.inf
        return cls(k, delta, lam_b, lam_d, tau_B, tau_D, **kw)

    def to_json(self):
        d = asdict(self)
        for key in ("tau_B", "tau_D"):
            if math.isinf(d[key]):
                d[key] = None
        return json.dumps(d)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        for key in ("tau_B", "tau_D"):
            if d[key] is None:
                d[key] = math.inf
        return cls(**d)


def _log_poisson(n, lam):
    return xlogy(n, lam) - lam - gammaln(n + 1)


def decay_weights(k: int, delta: float, tau: float) -> np.ndarray:
    """P(leak in subbin j) for j < k, and P(no leak in the window) at index k."""
    if math.isinf(tau):
        w = np.zeros(k + 1)
        w[k] = 1.0
        return w
    edges = np.exp(-np.arange(k + 1) * delta / tau)
    return np.append(edges[:-1] - edges[1:], edges[-1])


def _log_likelihood(counts, lam_start, lam_end, tau, k, delta):
    w = decay_weights(k, delta, tau)
    ls = _log_poisson(counts, lam_start)
    le = _log_poisson(counts, lam_end)
    lm = _log_poisson(counts, 0.5 * (lam_start + lam_end))
    n = counts.shape[0]
    before = np.zeros((n, k + 1))
    np.cumsum(ls, axis=1, out=before[:, 1:])           # sum_{i<j} ls
    after = np.zeros((n, k + 1))
    np.cumsum(le[:, ::-1], axis=1, out=after[:, 1:])    # sum of the last m entries
    after = after[:, ::-1]                               # after[:, j] = sum_{i>=j} le
    terms = np.empty((n, k + 1))
    terms[:, :k] = before[:, :k] + lm + after[:, 1:]
    terms[:, k] = before[:, k]
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    return logsumexp(terms + logw, axis=1)


def _as_counts(m: SubbinModel, counts):
    counts = np.asarray(counts)
    single = counts.ndim == 1
    counts = np.atleast_2d(counts).astype(float)
    if counts.shape[1] != m.k:
        raise ValueError(f"expected {m.k} subbin counts, got {counts.shape[1]}")
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    return counts, single


def log_likelihoods(m: SubbinModel, counts):
    """(log P(counts | bright), log P(counts | dark)) for each row of counts."""
    c, single = _as_counts(m, counts)
    tau_B = m.tau_B if m.bright_leak else math.inf
    tau_D = m.tau_D if m.dark_leak else math.inf
    lb = _log_likelihood(c, m.lam_bright, m.lam_dark, tau_B, m.k, m.delta)
    ld = _log_likelihood(c, m.lam_dark, m.lam_bright, tau_D, m.k, m.delta)
    if single:
        return float(lb[0]), float(ld[0])
    return lb, ld


def classify_subbin(m: SubbinModel, counts):
    """
    Label and prior-weighted log-likelihood ratio (bright over dark).

    A single count vector returns ``(Label, float)``; a 2D array returns
    arrays of labels and ratios.
    """
    c, single = _as_counts(m, counts)
    lb, ld = log_likelihoods(m, c)
    with np.errstate(divide="ignore"):
        log_prior = math.log(m.prior_bright) - math.log1p(-m.prior_bright) if 0 < m.prior_bright < 1 \
            else (math.inf if m.prior_bright == 1 else -math.inf)
    with np.errstate(invalid="ignore"):
        llr = lb - ld + log_prior
    labels = (llr > 0).astype(np.int8)
    if single:
        return Label(int(labels[0])), float(llr[0])
    return labels, llr
