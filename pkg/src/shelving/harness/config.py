"""
Experiment configuration: a single JSON document with one section per module.

Example::

    {
      "seed": 7,
      "out": "results",
      "mc": {"protocols": ["standard", "d52", "f72"], "n_dark": 20000, "n_bright": 20000,
             "R_bright": 50000, "R_bg": 500},
      "camera": {"R_bright": 100000, "psf_sigma": 1.5},
      "classify": {"subbin_width": 5e-5},
      "harness": {"detector": "APD", "analyses": ["threshold", "subbin"],
                  "times": [5e-5, 1e-4, 2e-4], "split_fraction": 0.05, "resamples": 20}
    }

Every key is optional; see ``DEFAULTS`` for the full list.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..atomic import Level, Term
from ..camera import FrameSpec
from ..classify.forest import ForestParams
from ..mc import ProtocolConfig
from ..transfer import PumpModel


class ConfigError(ValueError):
    pass


APD_TIMES = [5e-5, 7.5e-5, 1e-4, 1.5e-4, 2e-4, 3e-4, 4e-4, 6e-4, 8e-4, 1e-3, 1.5e-3]
EMCCD_TIMES = [5e-5, 1e-4, 2e-4, 4e-4, 8e-4, 1.5e-3]

DEFAULTS = {
    "seed": 0,
    "out": "out",
    "threads": 1,
    "mc": {
        "protocols": ["standard", "d52", "f72"],
        "n_dark": 20000,
        "n_bright": 20000,
        "schedule": "interleave",
        "R_bright": 50e3,
        "R_bg": 500.0,
        "tau_B": 2e-3,
        "tau_D": 30e-3,
        "shelf_F": 2,
        "shelving_error": 0.007,
        "pump_time": 0.2,
        "pump": {"p_inf": 1.0, "tau_pump": 0.1 / math.log(1000.0)},
        "detection_time": 1e-4,
        "subbins": 1,
    },
    "camera": {
        # photon rates reaching the camera; frames apply the QE below
        "R_bright": 100e3,
        "R_bg": 500.0,
        "width": 15,
        "height": 15,
        "psf_center": [7.2, 6.9],
        "psf_sigma": 1.5,
        "quantum_efficiency": 0.8,
        "em_gain": 300.0,
        "read_noise_sigma": 10.0,
        "bias": 100.0,
        "adu_per_electron": 0.2,
    },
    "classify": {
        "subbin_width": 5e-5,
        "bright_leak": True,
        "dark_leak": True,
        "prior_bright": 0.5,
        "forest": {"n_trees": 100, "max_depth": 8, "features": "sorted"},
    },
    "harness": {
        "detector": "APD",
        "analyses": None,          # APD: threshold+subbin, EMCCD: threshold+classifier
        "times": None,             # detector-specific default grid
        "split_fraction": 0.05,
        "resamples": 20,
        "classifier_resamples": 5,
    },
    "scenario": {
        "f72_trials": 1000000,
        "f72_block": 1000,
        "f72_time": 1e-3,
        "histogram_time": 2.5e-4,
        "camera_histogram_times": [5e-5, 4e-4, 1.5e-3],
        "rap_omega": 19e3,
        "rap_gamma": 2.6e3,
        "peak_sigma": 3e6,
        "peak_noise": 0.01,
        "peak_points": 121,
    },
}

PROTOCOL_ALIASES = {
    "standard": "standard", "s12": "standard",
    "d52": "d52", "d52_shelved": "d52",
    "f72": "f72", "f72_shelved": "f72",
}
ANALYSES = {"APD": ("threshold", "subbin"), "EMCCD": ("threshold", "classifier")}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in base:
            raise ConfigError(f"unknown config key '{path}{k}'")
        if isinstance(base[k], dict) and k != "pump":
            if not isinstance(v, dict):
                raise ConfigError(f"'{path}{k}' must be an object")
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        self.validate()

    # -- construction ----------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict | None = None, **overrides) -> "ExperimentConfig":
        raw = _merge(DEFAULTS, d or {})
        for key, value in overrides.items():
            if value is None:
                continue
            section, _, name = key.rpartition("__")
            target = raw[section] if section else raw
            if name not in target:
                raise ConfigError(f"unknown config key '{key}'")
            target[name] = value
        return cls(raw)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d, **overrides)

    def to_json(self):
        return json.dumps(self.raw, indent=2, sort_keys=True)

    # -- accessors -------------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def out(self) -> Path:
        return Path(self.raw["out"])

    @property
    def threads(self) -> int:
        return int(self.raw["threads"])

    @property
    def detector(self) -> str:
        return self.raw["harness"]["detector"]

    @property
    def analyses(self) -> tuple:
        a = self.raw["harness"]["analyses"]
        return tuple(a) if a else ANALYSES[self.detector]

    @property
    def times(self) -> list:
        t = self.raw["harness"]["times"]
        if t is None:
            t = APD_TIMES if self.detector == "APD" else EMCCD_TIMES
        return sorted(float(x) for x in t)

    @property
    def protocols(self) -> list:
        return [PROTOCOL_ALIASES[p] for p in self.raw["mc"]["protocols"]]

    @property
    def n_dark(self):
        return int(self.raw["mc"]["n_dark"])

    @property
    def n_bright(self):
        return int(self.raw["mc"]["n_bright"])

    @property
    def schedule(self):
        return self.raw["mc"]["schedule"]

    @property
    def split_fraction(self):
        return float(self.raw["harness"]["split_fraction"])

    def resamples_for(self, analysis):
        key = "classifier_resamples" if analysis == "classifier" else "resamples"
        return int(self.raw["harness"][key])

    def protocol_config(self, name, detector=None, detection_time=None) -> ProtocolConfig:
        """Protocol with the detector's count rates (the camera has its own)."""
        mc = self.raw["mc"]
        detector = detector or self.detector
        rates = self.raw["camera"] if detector == "EMCCD" else mc
        common = dict(R_bright=float(rates["R_bright"]), R_bg=float(rates["R_bg"]),
                      detection_time=float(detection_time or mc["detection_time"]),
                      subbins=int(mc["subbins"]))
        name = PROTOCOL_ALIASES[name]
        if name == "standard":
            return ProtocolConfig.standard(tau_B=float(mc["tau_B"]), tau_D=float(mc["tau_D"]), **common)
        if name == "d52":
            return ProtocolConfig.d52_shelved(shelf_level=Level(Term.D52, int(mc["shelf_F"]), 0),
                                              shelving_error=float(mc["shelving_error"]), **common)
        pump = PumpModel(float(mc["pump"]["p_inf"]), float(mc["pump"]["tau_pump"]))
        return ProtocolConfig.f72_shelved(pump=pump, pump_time=float(mc["pump_time"]), **common)

    def frame_spec(self) -> FrameSpec:
        cam = {k: v for k, v in self.raw["camera"].items() if k not in ("R_bright", "R_bg")}
        cam["psf_center"] = tuple(cam["psf_center"])
        return FrameSpec(**cam)

    def forest_params(self, seed=0) -> ForestParams:
        return ForestParams(seed=seed, **self.raw["classify"]["forest"])

    # -- validation ------------------------------------------------------
    def validate(self):
        raw = self.raw
        h = raw["harness"]
        if h["detector"] not in ANALYSES:
            raise ConfigError(f"detector must be one of {sorted(ANALYSES)}")
        bad = [a for a in self.analyses if a not in ("threshold", "subbin", "classifier")]
        if bad:
            raise ConfigError(f"unknown analyses {bad}")
        if "subbin" in self.analyses and self.detector != "APD":
            raise ConfigError("subbin analysis needs time tags (APD detector)")
        if "classifier" in self.analyses and self.detector != "EMCCD":
            raise ConfigError("classifier analysis needs camera frames (EMCCD detector)")
        for p in raw["mc"]["protocols"]:
            if p not in PROTOCOL_ALIASES:
                raise ConfigError(f"unknown protocol '{p}'")
        if not raw["mc"]["protocols"]:
            raise ConfigError("no protocols configured")
        times = self.times
        if not times or any(not (t > 0 and math.isfinite(t)) for t in times):
            raise ConfigError("detection-time grid must be nonempty and positive")
        f = self.split_fraction
        if not 0 < f < 1:
            raise ConfigError("split fraction must lie in (0, 1)")
        need = math.ceil(20 / f - 1e-9)
        if min(self.n_dark, self.n_bright) < need:
            raise ConfigError(f"need at least {need} trials per class for split fraction {f}")
        if self.resamples_for("threshold") < 1 or self.resamples_for("classifier") < 1:
            raise ConfigError("resample count must be at least 1")
        if self.threads < 1:
            raise ConfigError("thread count must be at least 1")
        if not float(raw["classify"]["subbin_width"]) > 0:
            raise ConfigError("subbin width must be positive")
        try:
            for p in self.protocols:
                self.protocol_config(p, "APD")
                self.protocol_config(p, "EMCCD")
            self.frame_spec()
            self.forest_params()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
