"""Named end-to-end pipelines, one per reproduced figure or table."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .. import rng as rngmod
from ..atomic import DEFAULT_CONSTANTS
from ..camera import hot_pixel_sums, render_frames, roi_pixels
from ..classify.peakfit import gaussian_peak_fit
from ..classify.report import error_report, make_split, qpn_sigma
from ..classify.threshold import classify_threshold, fit_threshold
from ..mc import run_batch
from ..transfer import SHELVE_TO_D2, SHELVE_TO_D3, rap_max_transfer, sequence_residual
from .config import ExperimentConfig
from .sweep import (SweepResult, _fmt, frame_substream, locate_roi, protocol_seed, select_hot_threshold,
                    simulate_protocol, split_for, sweep_detection_time)

SCENARIOS = ("fig4-shelving", "fig5-rap", "fig6-apd", "fig7-emccd", "table2-summary", "fig3-peakfit")


class UnknownScenario(KeyError):
    pass


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _with(cfg: ExperimentConfig, **sections) -> ExperimentConfig:
    raw = json.loads(json.dumps(cfg.raw))
    for sec, vals in sections.items():
        raw[sec].update(vals)
    return ExperimentConfig(raw)


# ---------------------------------------------------------------------------

def fig4_shelving(cfg, out: Path, shots: int = 1000):
    rows = []
    for name, seq in (("D5/2|3>", SHELVE_TO_D3), ("D5/2|2>", SHELVE_TO_D2)):
        traj = sequence_residual(seq).trajectory
        for n, (eff, res) in enumerate(zip(seq.efficiencies, traj), start=1):
            rows.append([name, n, eff, res, 1 - res, qpn_sigma(res, shots)])
    text = _csv(["sequence", "pulses", "pulse_efficiency", "residual", "transfer", "qpn_sigma"], rows)
    (out / "fig4_shelving.csv").write_text(text)
    return {"fig4_shelving.csv": text}


def fig5_rap(cfg, out: Path):
    sc = cfg.raw["scenario"]
    omega0, gamma0 = float(sc["rap_omega"]), float(sc["rap_gamma"])
    rows = []
    gammas = np.unique(np.concatenate([np.logspace(0, 6, 49), [2.0, gamma0]]))
    for g in gammas:
        r = rap_max_transfer(omega0, g)
        rows.append(["gamma", omega0, g, r.alpha, r.probability, int(r.supremum)])
    omegas = np.unique(np.concatenate([np.logspace(3, 7, 33), [omega0, 2.5e6]]))
    for om in omegas:
        r = rap_max_transfer(om, gamma0)
        rows.append(["omega", om, gamma0, r.alpha, r.probability, int(r.supremum)])
    text = _csv(["sweep", "omega_hz", "gamma_hz", "alpha_opt", "p_max", "supremum"], rows)
    (out / "fig5_rap.csv").write_text(text)
    return {"fig5_rap.csv": text}


def _histogram(protocol, values, labels):
    values = np.asarray(values)
    edges = np.arange(int(values.max()) + 2) if values.size else np.arange(2)
    dark = np.histogram(values[labels == 0], edges)[0]
    bright = np.histogram(values[labels == 1], edges)[0]
    return [[protocol, int(c), int(d), int(b)] for c, d, b in zip(edges[:-1], dark, bright)]


def fig6_apd(cfg, out: Path):
    cfg = _with(cfg, harness={"detector": "APD"})
    files = {}
    sweep_cfg = _with(cfg, mc={"protocols": [p for p in cfg.raw["mc"]["protocols"] if p != "f72"] or ["standard"]})
    res = sweep_detection_time(sweep_cfg)
    res.write(out, "fig6_sweep")
    files["fig6_sweep.csv"] = res.to_csv()

    sc = cfg.raw["scenario"]
    t_h = float(sc["histogram_time"])
    hist = []
    for p in ("standard", "d52", "f72"):
        ds = simulate_protocol(cfg, p, "APD", t_max=t_h)
        hist += _histogram(p, ds.totals(), ds.labels)
    files["fig6_histograms.csv"] = _csv(["protocol", "counts", "dark", "bright"], hist)
    (out / "fig6_histograms.csv").write_text(files["fig6_histograms.csv"])

    # F7/2: one large run in preparation blocks, as in the long-run floor measurement
    n = int(sc["f72_trials"])
    block = int(sc["f72_block"])
    pc = cfg.protocol_config("f72", "APD", detection_time=float(sc["f72_time"]))
    ds = run_batch(pc, n // 2, n - n // 2, ("blocks", block), seed=protocol_seed(cfg, "f72", "APD"),
                   workers=cfg.threads)
    totals = ds.totals()
    sp = make_split(ds.labels, cfg.split_fraction, seed=rngmod.derive_seed(cfg.seed, 2, 303))
    m = fit_threshold(totals[sp.calibration], ds.labels[sp.calibration])
    rep = error_report(classify_threshold(m, totals[sp.evaluation]), ds.labels[sp.evaluation])
    rows = [[pc.detection_time, n, block, ds.n_blocks, m.threshold, rep.eps_d, rep.eps_b, rep.eps,
             rep.ci[0], rep.ci[1]]]
    files["fig6_f72.csv"] = _csv(["time", "trials", "block", "blocks", "threshold", "eps_d", "eps_b", "eps",
                                  "ci_lo", "ci_hi"], rows)
    (out / "fig6_f72.csv").write_text(files["fig6_f72.csv"])
    f72_hist = _histogram("f72", totals, ds.labels)
    files["fig6_f72_histogram.csv"] = _csv(["protocol", "counts", "dark", "bright"], f72_hist)
    (out / "fig6_f72_histogram.csv").write_text(files["fig6_f72_histogram.csv"])
    return files


def camera_histograms(cfg, protocol, times, n_bins=60):
    """Hot-pixel-sum histograms (calibrated n_hot) at the given exposures."""
    rows = []
    spec = cfg.frame_spec()
    big = simulate_protocol(cfg, protocol, "EMCCD", t_max=max(times))
    seed = protocol_seed(cfg, protocol, "EMCCD")
    sp = split_for(cfg, protocol, big.labels, 0)
    roi = locate_roi(cfg, protocol, big, sp.calibration)
    for t in times:
        ds = big if t == big.detection_time else big.truncate(t)
        frames = render_frames(ds.totals(), spec, seed=seed, substream=frame_substream(t))
        cal = sp.calibration
        hs = hot_pixel_sums(roi_pixels(frames, roi, spec.bias))
        n_hot, m = select_hot_threshold(hs[cal], ds.labels[cal])
        v = hs[:, n_hot - 1]
        edges = np.linspace(v.min(), v.max(), n_bins + 1)
        dark = np.histogram(v[ds.labels == 0], edges)[0]
        bright = np.histogram(v[ds.labels == 1], edges)[0]
        for lo, hi, d, b in zip(edges[:-1], edges[1:], dark, bright):
            rows.append([protocol, t, n_hot, m.threshold, lo, hi, int(d), int(b)])
    return rows


def fig7_emccd(cfg, out: Path):
    cfg = _with(cfg, harness={"detector": "EMCCD"})
    sweep_cfg = _with(cfg, mc={"protocols": [p for p in cfg.raw["mc"]["protocols"] if p != "f72"] or ["d52"]})
    res = sweep_detection_time(sweep_cfg)
    res.write(out, "fig7_sweep")
    files = {"fig7_sweep.csv": res.to_csv()}
    times = [float(t) for t in cfg.raw["scenario"]["camera_histogram_times"]]
    rows = camera_histograms(cfg, "d52", times)
    files["fig7_histograms.csv"] = _csv(["protocol", "time", "n_hot", "threshold", "bin_lo", "bin_hi",
                                         "dark", "bright"], rows)
    (out / "fig7_histograms.csv").write_text(files["fig7_histograms.csv"])
    return files


def table2_rows(apd: SweepResult, emccd: SweepResult):
    rows = []
    for p in ("standard", "d52", "f72"):
        for det, res, analyses in (("APD", apd, ("threshold", "subbin")), ("EMCCD", emccd, ("threshold", "classifier"))):
            for a in analyses:
                if not res.select(p, a):
                    continue
                o = res.optimum(p, a)
                rows.append([p, det, a, o.band_mean, o.band_sigma, o.report.ci[1], o.time])
    return rows


def format_table2(rows) -> str:
    names = {"standard": "S1/2 standard", "d52": "D5/2 shelved", "f72": "F7/2 shelved"}
    cols = [("APD", "threshold"), ("APD", "subbin"), ("EMCCD", "threshold"), ("EMCCD", "classifier")]
    lookup = {(r[0], r[1], r[2]): r for r in rows}
    head = f"{'protocol':<15}" + "".join(f"{d + ' ' + a:>28}" for d, a in cols)
    lines = [head, "-" * len(head)]
    for p in ("standard", "d52", "f72"):
        cells = []
        for d, a in cols:
            r = lookup.get((p, d, a))
            if r is None:
                cells.append(f"{'-':>28}")
            else:
                eps = f"{r[3]:.2e}" if r[3] > 0 else f"<{r[5]:.1e}"
                cells.append(f"{eps + ' @ ' + format(r[6] * 1e3, '.3g') + ' ms':>28}")
        lines.append(f"{names[p]:<15}" + "".join(cells))
    return "\n".join(lines)


def table2_summary(cfg, out: Path):
    apd = sweep_detection_time(_with(cfg, harness={"detector": "APD", "analyses": ["threshold", "subbin"]}))
    em = sweep_detection_time(_with(cfg, harness={"detector": "EMCCD", "analyses": ["threshold", "classifier"]}))
    apd.write(out, "table2_apd_sweep")
    em.write(out, "table2_emccd_sweep")
    rows = table2_rows(apd, em)
    text = _csv(["protocol", "detector", "analysis", "eps", "band_sigma", "ci_hi", "time"], rows)
    (out / "table2_summary.csv").write_text(text)
    table = format_table2(rows)
    (out / "table2_summary.txt").write_text(table + "\n")
    print(table)
    return {"table2_summary.csv": text, "table2_apd_sweep.csv": apd.to_csv(),
            "table2_emccd_sweep.csv": em.to_csv()}


def fig3_peakfit(cfg, out: Path):
    """Synthetic 760 nm repump scans around both tabulated line centres, refitted."""
    sc = cfg.raw["scenario"]
    sigma, noise, npts = float(sc["peak_sigma"]), float(sc["peak_noise"]), int(sc["peak_points"])
    rng = rngmod.trial_rng(rngmod.derive_seed(cfg.seed, 404), 0)
    rows = []
    for name, centre in (("after D5/2|3,0>", DEFAULT_CONSTANTS.f_760_after_D3.value),
                         ("after D5/2|2,0>", DEFAULT_CONSTANTS.f_760_after_D2.value)):
        x = centre + np.linspace(-10 * sigma, 10 * sigma, npts)
        y = 0.05 + 0.9 * np.exp(-0.5 * ((x - centre) / sigma) ** 2)
        y = y + noise * rng.standard_normal(npts)
        (pk,) = gaussian_peak_fit(x, y, 1)
        rows.append([name, centre, pk.center, pk.center_err, pk.width, pk.width_err, pk.amplitude, pk.offset,
                     (pk.center - centre) / pk.center_err])
    text = _csv(["line", "true_center_hz", "fit_center_hz", "center_err_hz", "width_hz", "width_err_hz",
                 "amplitude", "offset", "pull"], rows)
    (out / "fig3_peakfit.csv").write_text(text)
    return {"fig3_peakfit.csv": text}


_RUNNERS = {
    "fig4-shelving": fig4_shelving,
    "fig5-rap": fig5_rap,
    "fig6-apd": fig6_apd,
    "fig7-emccd": fig7_emccd,
    "table2-summary": table2_summary,
    "fig3-peakfit": fig3_peakfit,
}


def run_scenario(name: str, cfg: ExperimentConfig, out: Path | None = None) -> dict:
    """Run a named pipeline, write its files into ``out`` and return {filename: csv text}."""
    if name not in _RUNNERS:
        raise UnknownScenario(f"unknown scenario '{name}'; choose from {', '.join(SCENARIOS)}")
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return _RUNNERS[name](cfg, out)
