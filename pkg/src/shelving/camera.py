"""
Synthetic EMCCD frames and region-of-interest handling.

Noise chain per pixel: Poisson photoelectrons, Gamma-distributed electron
multiplication, Gaussian read noise on top of a bias, then quantisation to
non-negative integer ADU.  Pixel (row i, column j) covers
[j - 1/2, j + 1/2] x [i - 1/2, i + 1/2]; positions are (x, y) = (column, row).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import rng as rngmod
from .classify.lm import FitError, levenberg_marquardt


class NoIonFound(FitError):
    pass


@dataclass(frozen=True)
class FrameSpec:
    width: int = 15
    height: int = 15
    psf_center: tuple[float, float] = (7.2, 6.9)
    psf_sigma: float = 1.5
    quantum_efficiency: float = 0.8
    em_gain: float = 300.0
    read_noise_sigma: float = 10.0
    bias: float = 100.0
    adu_per_electron: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "psf_center", tuple(float(c) for c in self.psf_center))
        if self.width < 1 or self.height < 1:
            raise ValueError("frame dimensions must be at least 1")
        if not self.psf_sigma > 0:
            raise ValueError("PSF width must be positive")
        if not 0 <= self.quantum_efficiency <= 1:
            raise ValueError("quantum efficiency must lie in [0, 1]")
        if self.em_gain < 1:
            raise ValueError("EM gain must be at least 1")
        if self.read_noise_sigma < 0 or self.adu_per_electron <= 0:
            raise ValueError("invalid read noise or conversion factor")

    @property
    def shape(self):
        return (self.height, self.width)

    def psf_weights(self) -> np.ndarray:
        """Fraction of the PSF falling on each pixel."""
        cx, cy = self.psf_center
        s = self.psf_sigma
        xe = np.arange(self.width + 1) - 0.5
        ye = np.arange(self.height + 1) - 0.5
        wx = np.diff(ndtr((xe - cx) / s))
        wy = np.diff(ndtr((ye - cy) / s))
        return np.outer(wy, wx)


@dataclass
class Frame:
    pixels: np.ndarray
    spec: FrameSpec
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pixels.shape != self.spec.shape:
            raise ValueError("pixel array does not match the frame spec")

    def save(self, path):
        """16-bit little-endian row-major pixels plus a JSON sidecar."""
        path = Path(path)
        np.clip(self.pixels, 0, 65535).astype("<u2").tofile(path)
        sidecar = {"width": self.spec.width, "height": self.spec.height,
                   "spec": asdict(self.spec), "meta": self.meta}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def load(cls, path):
        path = Path(path)
        side = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        spec = FrameSpec(**side["spec"])
        pix = np.fromfile(path, dtype="<u2").reshape(side["height"], side["width"]).astype(np.int64)
        return cls(pix, spec, side.get("meta", {}))


def _render(psf_cdf, photon_count, spec, rng):
    # Independent per-pixel Poisson(N QE w_ij) is drawn as a Poisson total
    # scattered over pixels by w (Poisson splitting); same law, far cheaper.
    total = rng.poisson(photon_count * spec.quantum_efficiency * psf_cdf[-1])
    n_pix = spec.width * spec.height
    pix = np.searchsorted(psf_cdf, rng.random(total) * psf_cdf[-1], side="right")
    electrons = np.bincount(np.minimum(pix, n_pix - 1), minlength=n_pix)
    hit = np.flatnonzero(electrons)
    amplified = np.zeros(n_pix)
    amplified[hit] = rng.gamma(electrons[hit], spec.em_gain)
    adu = amplified * spec.adu_per_electron + spec.bias
    if spec.read_noise_sigma > 0:
        adu = adu + spec.read_noise_sigma * rng.standard_normal(n_pix)
    return np.maximum(np.rint(adu), 0).astype(np.int64).reshape(spec.shape)


def render_frame(photon_count: int, spec: FrameSpec, seed=0, index=0, substream=0) -> Frame:
    if photon_count < 0:
        raise ValueError("photon count must be non-negative")
    rng = rngmod.trial_rng(seed, index, rngmod.CAMERA, substream)
    pix = _render(np.cumsum(spec.psf_weights()), photon_count, spec, rng)
    return Frame(pix, spec, {"photon_count": int(photon_count), "seed": int(seed), "index": int(index)})


def render_frames(photon_counts, spec: FrameSpec, seed=0, indices=None, substream=0) -> np.ndarray:
    """
    Stack of frames, shape (n, height, width).  Frame ``k`` is identical to
    ``render_frame(photon_counts[k], spec, seed, indices[k], substream)``.
    """
    photon_counts = np.asarray(photon_counts)
    if np.any(photon_counts < 0):
        raise ValueError("photon count must be non-negative")
    indices = np.arange(len(photon_counts)) if indices is None else np.asarray(indices)
    cdf = np.cumsum(spec.psf_weights())
    streams = rngmod.TrialStreams(seed)
    out = np.empty((len(photon_counts),) + spec.shape, dtype=np.int64)
    for k, (n, i) in enumerate(zip(photon_counts, indices)):
        out[k] = _render(cdf, n, spec, streams.at(i, rngmod.CAMERA, substream))
    return out


# ---------------------------------------------------------------------------
# regions of interest

@dataclass(frozen=True)
class Roi:
    center: tuple[float, float]
    sigma: float
    x0: int
    x1: int
    y0: int
    y1: int

    @property
    def size(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def slices(self):
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def pixel_indices(self):
        yy, xx = np.mgrid[self.y0:self.y1, self.x0:self.x1]
        return list(zip(yy.ravel().tolist(), xx.ravel().tolist()))

    def check(self, shape):
        h, w = shape
        if not (0 <= self.x0 < self.x1 <= w and 0 <= self.y0 < self.y1 <= h):
            raise ValueError("ROI lies outside the frame")

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "Roi":
        d = json.loads(text)
        d["center"] = tuple(d["center"])
        return cls(**d)

    @classmethod
    def around(cls, center, sigma, shape):
        """Square window of side ceil(6 sigma) centred on ``center``, clipped to the frame."""
        side = max(1, math.ceil(6 * sigma))
        h, w = shape
        x0 = int(math.floor(center[0] - side / 2 + 0.5))
        y0 = int(math.floor(center[1] - side / 2 + 0.5))
        x0c, y0c = max(x0, 0), max(y0, 0)
        x1c, y1c = min(x0 + side, w), min(y0 + side, h)
        if x1c <= x0c or y1c <= y0c:
            raise NoIonFound("ROI window falls outside the frame")
        return cls((float(center[0]), float(center[1])), float(sigma), x0c, x1c, y0c, y1c)


def _gauss2d(p, xx, yy):
    amp, cx, cy, s, off = p
    return off + amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))


def fit_gaussian_2d(image: np.ndarray):
    """Least-squares isotropic 2D Gaussian; returns the LM result (amp, x, y, sigma, offset)."""
    h, w = image.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    xx, yy, z = xx.ravel(), yy.ravel(), image.ravel().astype(float)

    off0 = float(np.median(z))
    k = int(np.argmax(z))
    amp0 = z[k] - off0
    if not amp0 > 0:
        raise NoIonFound("no ion located: flat image")
    above = np.clip(z - off0, 0, None)
    s0 = max(math.sqrt(above.sum() / (2 * math.pi * amp0)), 0.5)
    p0 = np.array([amp0, xx[k], yy[k], s0, off0])

    def resid(p):
        return _gauss2d(p, xx, yy) - z

    def jac(p):
        amp, cx, cy, s, _ = p
        dx, dy = xx - cx, yy - cy
        e = np.exp(-(dx * dx + dy * dy) / (2 * s * s))
        return np.column_stack([e, amp * e * dx / s**2, amp * e * dy / s**2,
                                amp * e * (dx * dx + dy * dy) / s**3, np.ones_like(e)])

    return levenberg_marquardt(resid, jac, p0, max_iter=500), resid


def fit_roi(calibration_frames, significance=5.0) -> Roi:
    """
    Locate the ion on the mean of bright calibration frames.

    The fit is rejected (:class:`NoIonFound`) unless the fitted amplitude
    exceeds ``significance`` times the rms fit residual and the centre lies
    inside the frame.
    """
    frames = [f.pixels if isinstance(f, Frame) else np.asarray(f) for f in calibration_frames]
    if not frames:
        raise ValueError("need at least one calibration frame")
    mean = np.mean(np.stack(frames), axis=0)
    h, w = mean.shape
    try:
        res, resid = fit_gaussian_2d(mean)
    except FitError as exc:
        raise NoIonFound(f"no ion located: {exc}") from exc
    amp, cx, cy, s, _ = res.params
    s = abs(s)
    rms = math.sqrt(res.cost / mean.size)
    if not (amp > significance * max(rms, 1e-12) and 0 <= cx <= w - 1 and 0 <= cy <= h - 1
            and 0.3 < s < max(h, w)):
        raise NoIonFound("no ion located")
    return Roi.around((cx, cy), s, (h, w))


def roi_pixels(frames, roi: Roi, bias: float) -> np.ndarray:
    """Bias-subtracted ROI pixel vectors, shape (n, roi.size)."""
    frames = np.asarray(frames)
    single = frames.ndim == 2
    if single:
        frames = frames[None]
    roi.check(frames.shape[1:])
    sy, sx = roi.slices
    out = frames[:, sy, sx].reshape(len(frames), -1).astype(float) - bias
    return out[0] if single else out


def hot_pixel_sums(pixvecs: np.ndarray) -> np.ndarray:
    """Column ``n-1`` is the sum of the ``n`` largest entries of each row."""
    return np.cumsum(-np.sort(-np.atleast_2d(pixvecs), axis=1), axis=1)


def roi_counts(frame, roi: Roi, n_hot: int, bias: float | None = None) -> float:
    """Sum of the ``n_hot`` brightest bias-subtracted pixels inside ``roi``."""
    if isinstance(frame, Frame):
        bias = frame.spec.bias if bias is None else bias
        frame = frame.pixels
    if bias is None:
        raise ValueError("bias required for a bare pixel array")
    roi.check(frame.shape)
    if not 1 <= n_hot <= roi.size:
        raise ValueError("n_hot must lie in [1, ROI size]")
    return float(hot_pixel_sums(roi_pixels(frame, roi, bias))[0, n_hot - 1])
