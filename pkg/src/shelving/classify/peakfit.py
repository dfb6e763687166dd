"""Sum-of-Gaussians line fits (resonance scans and similar 1D spectra)."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .lm import FitError, LMResult, levenberg_marquardt


class Peak(NamedTuple):
    center: float
    width: float       # Gaussian sigma
    amplitude: float
    offset: float      # shared constant background
    center_err: float
    width_err: float
    amplitude_err: float
    offset_err: float


def _local_maxima(y):
    """
    Indices of local maxima (plateaus counted once, ends included), most
    prominent first, so noise ripples on a large peak rank below a second peak.
    """
    n = len(y)
    idx = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and y[j + 1] == y[i]:
            j += 1
        left = y[i - 1] if i > 0 else -np.inf
        right = y[j + 1] if j + 1 < n else -np.inf
        if y[i] > left and y[i] > right:
            idx.append((i + j) // 2)
        i = j + 1
    return sorted(idx, key=lambda k: (-_prominence(y, k), -y[k]))


def _prominence(y, k):
    # drop to the lowest point before reaching higher ground (or the edge) on each side
    higher = np.flatnonzero(y > y[k])
    lh = higher[higher < k]
    rh = higher[higher > k]
    lo = lh[-1] if len(lh) else 0
    hi = rh[0] if len(rh) else len(y) - 1
    return y[k] - max(y[lo:k + 1].min(), y[k:hi + 1].min())


def _model(p, u, n):
    out = np.full_like(u, p[-1])
    for m in range(n):
        a, c, s = p[3 * m:3 * m + 3]
        out += a * np.exp(-0.5 * ((u - c) / s) ** 2)
    return out


def _jac(p, u, n):
    J = np.empty((len(u), 3 * n + 1))
    for m in range(n):
        a, c, s = p[3 * m:3 * m + 3]
        z = (u - c) / s
        e = np.exp(-0.5 * z * z)
        J[:, 3 * m] = e
        J[:, 3 * m + 1] = a * e * z / s
        J[:, 3 * m + 2] = a * e * z * z / s
    J[:, -1] = 1.0
    return J


def gaussian_peak_fit(x, y, n_peaks: int = 1, max_iter: int = 500, return_result: bool = False):
    """
    Fit ``offset + sum_m A_m exp(-(x-c_m)^2 / 2 w_m^2)``.

    Peaks are seeded at the ``n_peaks`` highest local maxima.  The abscissa
    is centred and scaled internally so absolute frequencies (~1e14 Hz) fit
    as well as detunings.  Returns a list of :class:`Peak` sorted by center.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if n_peaks < 1:
        raise ValueError("need at least one peak")
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1D of equal length")
    if len(x) < 4 * n_peaks:
        raise ValueError("need at least 4 points per peak")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")

    x0 = x.mean()
    scale = (x[-1] - x[0]) / 2
    u = (x - x0) / scale
    off0 = float(np.min(y))
    yc = y - off0
    if not np.any(yc > 0):
        raise FitError("no peak structure in data", float(np.linalg.norm(y)))
    maxima = _local_maxima(y)
    if len(maxima) < n_peaks:
        raise FitError(f"found {len(maxima)} local maxima for {n_peaks} peaks", float(np.linalg.norm(yc)))

    p0 = []
    for k in maxima[:n_peaks]:
        half = yc[k] / 2
        lo = k
        while lo > 0 and yc[lo] > half:
            lo -= 1
        hi = k
        while hi < len(u) - 1 and yc[hi] > half:
            hi += 1
        fwhm = max(u[hi] - u[lo], 2 * np.min(np.diff(u)))
        p0 += [yc[k], u[k], fwhm / 2.3548]
    p0.append(off0)

    res: LMResult = levenberg_marquardt(lambda p: _model(p, u, n_peaks) - y,
                                        lambda p: _jac(p, u, n_peaks), np.array(p0), max_iter=max_iter)
    p, err = res.params, res.stderr
    peaks = []
    for m in range(n_peaks):
        a, c, s = p[3 * m:3 * m + 3]
        ea, ec, es = err[3 * m:3 * m + 3]
        peaks.append(Peak(x0 + c * scale, abs(s) * scale, a, p[-1], ec * scale, es * scale, ea, err[-1]))
    peaks.sort(key=lambda q: q.center)
    return (peaks, res) if return_result else peaks
