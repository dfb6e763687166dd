"""
Detection-time sweeps.

Each protocol is simulated once at the longest grid time; shorter windows
are exact truncations of the same trials (arrival times are generated by a
time-change of one unit-rate process, so a window is a prefix).  For every
grid time and analysis the labelled trials are split into calibration and
evaluation sets, the analyser is calibrated, and the evaluation error is
recorded.  Repeating with re-drawn calibration subsets gives the error band.
"""
from __future__ import annotations

import csv
import io
import json
import multiprocessing as mp
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import rng as rngmod
from ..camera import fit_roi, hot_pixel_sums, render_frames, roi_pixels
from ..classify.forest import classify_pixels, train_classifier
from ..classify.report import ErrorReport, error_report, make_split
from ..classify.subbin import SubbinModel, classify_subbin
from ..classify.threshold import classify_threshold, fit_threshold
from ..mc import TrialDataset, run_batch
from .config import ExperimentConfig

PROTOCOL_IDS = {"standard": 0, "d52": 1, "f72": 2}
DETECTOR_IDS = {"APD": 0, "EMCCD": 1}
_SPLIT_SALT = 101
_FOREST_SALT = 202

CSV_COLUMNS = ("time", "protocol", "analysis", "eps_d", "eps_b", "eps", "ci_lo", "ci_hi",
               "band_mean", "band_sigma", "n_d", "n_b", "resamples", "parameters")


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


@dataclass
class SweepRow:
    time: float
    protocol: str
    analysis: str
    report: ErrorReport          # first calibration draw
    band_mean: float
    band_sigma: float
    resamples: int
    parameters: str = ""

    def csv_row(self):
        r = self.report
        return [self.time, self.protocol, self.analysis, r.eps_d, r.eps_b, r.eps, r.ci[0], r.ci[1],
                self.band_mean, self.band_sigma, r.n_d, r.n_b, self.resamples, self.parameters]

    def to_dict(self):
        return dict(zip(CSV_COLUMNS, self.csv_row())) | {"ci_d": list(self.report.ci_d),
                                                         "ci_b": list(self.report.ci_b)}


@dataclass
class SweepResult:
    rows: list
    detector: str
    config: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)

    def select(self, protocol=None, analysis=None):
        return [r for r in self.rows
                if (protocol is None or r.protocol == protocol) and (analysis is None or r.analysis == analysis)]

    def optimum(self, protocol, analysis, key="band_mean") -> SweepRow:
        """Grid point with the lowest error (band mean by default; earliest time on ties)."""
        rows = self.select(protocol, analysis)
        if not rows:
            raise KeyError((protocol, analysis))
        score = (lambda r: r.band_mean) if key == "band_mean" else (lambda r: r.report.eps)
        return min(rows, key=lambda r: (score(r), r.time))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r.csv_row()])
        return buf.getvalue()

    def summary(self) -> dict:
        pairs = sorted({(r.protocol, r.analysis) for r in self.rows},
                       key=lambda pa: (PROTOCOL_IDS.get(pa[0], 9), pa[1]))
        best = []
        for p, a in pairs:
            o = self.optimum(p, a)
            best.append({"protocol": p, "analysis": a, "time": o.time, "eps": o.band_mean,
                         "band_sigma": o.band_sigma, "ci": list(o.report.ci)})
        return {"detector": self.detector, "optima": best, "rows": [r.to_dict() for r in self.rows],
                "config": self.config, "runtime": self.runtime}

    def write(self, out_dir, stem="sweep"):
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{stem}.csv").write_text(self.to_csv())
        (out_dir / f"{stem}.json").write_text(json.dumps(self.summary(), indent=2))


# ---------------------------------------------------------------------------
# per-grid-point analysis

def protocol_seed(cfg: ExperimentConfig, protocol: str, detector: str) -> int:
    return rngmod.derive_seed(cfg.seed, PROTOCOL_IDS[protocol], DETECTOR_IDS[detector])


def split_for(cfg, protocol, labels, resample):
    seed = rngmod.derive_seed(cfg.seed, PROTOCOL_IDS[protocol], _SPLIT_SALT)
    return make_split(labels, cfg.split_fraction, seed=seed, resample=resample)


def frame_substream(t: float) -> int:
    """Camera substream per exposure time (in ns), independent of the grid layout."""
    return int(round(t * 1e9))


def select_hot_threshold(hs, labels):
    """
    Pick the hot-pixel count and threshold minimising the calibration error
    (fewest pixels on ties).  ``hs`` are cumulative hot-pixel sums.
    """
    best = None
    for n in range(1, hs.shape[1] + 1):
        m = fit_threshold(hs[:, n - 1], labels)
        pred = classify_threshold(m, hs[:, n - 1])
        nd = np.count_nonzero(labels == 0)
        nb = len(labels) - nd
        miss_d = np.count_nonzero(pred[labels == 0] == 1)
        miss_b = np.count_nonzero(pred[labels == 1] == 0)
        score = miss_d * nb + miss_b * nd
        if best is None or score < best[0]:
            best = (score, n, m)
    return best[1], best[2]


def _band(eps_list):
    a = np.asarray(eps_list, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if len(a) > 1 else 0.0


def analyse_apd(cfg, protocol, ds: TrialDataset, t: float):
    labels = ds.labels
    totals = ds.totals()
    rows = []
    for analysis in cfg.analyses:
        n_res = cfg.resamples_for(analysis)
        reports, params = [], ""
        if analysis == "subbin":
            k = max(1, int(round(t / float(cfg.raw["classify"]["subbin_width"]))))
            c = cfg.raw["classify"]
            model = SubbinModel.for_protocol(cfg.protocol_config(protocol, "APD"), k, window=t,
                                             prior_bright=float(c["prior_bright"]),
                                             bright_leak=bool(c["bright_leak"]), dark_leak=bool(c["dark_leak"]))
            pred, _ = classify_subbin(model, ds.counts(k))
            params = f"k={k}"
        for r in range(n_res):
            sp = split_for(cfg, protocol, labels, r)
            if analysis == "threshold":
                m = fit_threshold(totals[sp.calibration], labels[sp.calibration])
                p = classify_threshold(m, totals[sp.evaluation])
                if r == 0:
                    params = f"threshold={m.threshold!r}"
            else:
                p = pred[sp.evaluation]
            reports.append(error_report(p, labels[sp.evaluation]))
        mean, sigma = _band([x.eps for x in reports])
        rows.append(SweepRow(t, protocol, analysis, reports[0], mean, sigma, n_res, params))
    return rows


def locate_roi(cfg, protocol, full: TrialDataset, calibration):
    """
    ROI from the bright calibration trials imaged over the full (longest)
    window; the ion position does not depend on the exposure.
    """
    idx = calibration[full.labels[calibration] == 1]
    frames = render_frames(full.totals()[idx], cfg.frame_spec(), seed=protocol_seed(cfg, protocol, "EMCCD"),
                           indices=idx, substream=frame_substream(full.detection_time))
    return fit_roi(frames)


def analyse_emccd(cfg, protocol, ds: TrialDataset, t: float, full: TrialDataset | None = None):
    labels = ds.labels
    spec = cfg.frame_spec()
    full = ds if full is None else full
    seed = protocol_seed(cfg, protocol, "EMCCD")
    frames = render_frames(ds.totals(), spec, seed=seed, substream=frame_substream(t))
    rois = {}
    rows = []
    for analysis in cfg.analyses:
        n_res = cfg.resamples_for(analysis)
        reports, params = [], ""
        for r in range(n_res):
            sp = split_for(cfg, protocol, labels, r)
            cal, ev = sp.calibration, sp.evaluation
            if r not in rois:
                rois[r] = locate_roi(cfg, protocol, full, cal)
            roi = rois[r]
            pv = roi_pixels(frames, roi, spec.bias)
            if analysis == "threshold":
                hs = hot_pixel_sums(pv)
                n_hot, m = select_hot_threshold(hs[cal], labels[cal])
                p = classify_threshold(m, hs[ev, n_hot - 1])
                if r == 0:
                    params = f"n_hot={n_hot};threshold={m.threshold!r};roi={roi.size}"
            else:
                fseed = rngmod.derive_seed(cfg.seed, PROTOCOL_IDS[protocol], _FOREST_SALT, r)
                model = train_classifier(pv[cal], labels[cal], cfg.forest_params(seed=fseed))
                p = classify_pixels(model, pv[ev])
                if r == 0:
                    params = f"trees={model.n_trees};roi={roi.size}"
            reports.append(error_report(p, labels[ev]))
        mean, sigma = _band([x.eps for x in reports])
        rows.append(SweepRow(t, protocol, analysis, reports[0], mean, sigma, n_res, params))
    return rows


# ---------------------------------------------------------------------------
# orchestration

_DATASETS: dict = {}


def simulate_protocol(cfg: ExperimentConfig, protocol: str, detector: str | None = None,
                      t_max: float | None = None) -> TrialDataset:
    detector = detector or cfg.detector
    t_max = t_max or max(cfg.times)
    pc = cfg.protocol_config(protocol, detector, detection_time=t_max)
    return run_batch(pc, cfg.n_dark, cfg.n_bright, cfg.schedule,
                     seed=protocol_seed(cfg, protocol, detector), workers=cfg.threads)


def _task(args):
    cfg, protocol, t = args
    ds = _DATASETS[protocol]
    ds_t = ds if t == ds.detection_time else ds.truncate(t)
    if cfg.detector == "APD":
        return analyse_apd(cfg, protocol, ds_t, t)
    return analyse_emccd(cfg, protocol, ds_t, t, full=ds)


def run_tasks(fn, tasks, threads):
    """Map ``fn`` over ``tasks`` in order; forked workers see module state."""
    if threads > 1 and len(tasks) > 1:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def sweep_detection_time(cfg: ExperimentConfig, datasets: dict | None = None) -> SweepResult:
    """Error versus detection time for every configured protocol and analysis."""
    t0 = _time.perf_counter()
    times = cfg.times
    _DATASETS.clear()
    for p in cfg.protocols:
        if datasets and p in datasets:
            _DATASETS[p] = datasets[p]
        else:
            _DATASETS[p] = simulate_protocol(cfg, p)
    t_sim = _time.perf_counter() - t0
    tasks = [(cfg, p, t) for p in cfg.protocols for t in times]
    parts = run_tasks(_task, tasks, cfg.threads)
    _DATASETS.clear()
    rows = [row for part in parts for row in part]
    runtime = {"simulate_s": t_sim, "total_s": _time.perf_counter() - t0, "threads": cfg.threads}
    return SweepResult(rows, cfg.detector, cfg.raw, runtime)
