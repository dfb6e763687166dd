"""
Event-driven Monte Carlo of photon time tags for the three detection
protocols.

Each trial follows the ion's hidden internal state through every transition
inside the detection window; photons are an inhomogeneous Poisson process
whose rate is piecewise constant between transitions.  Arrival times are
generated by mapping unit-rate exponential arrivals through the inverse of
the integrated rate, which makes the tags of a shorter window an exact
prefix of those of a longer one.
"""
from __future__ import annotations

import csv
import enum
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .atomic import DEFAULT_CONSTANTS, AtomicConstants, Level, Term, sample_decay
from .transfer import PumpModel, incoherent_pump_probability


class Protocol(str, enum.Enum):
    STANDARD = "standard"
    D52_SHELVED = "d52_shelved"
    F72_SHELVED = "f72_shelved"


class Label(enum.IntEnum):
    DARK = 0
    BRIGHT = 1


class InternalState(enum.IntEnum):
    BRIGHT = 0        # scattering detection light
    DARK_QUBIT = 1    # |0>, only off-resonant scattering
    SHELVED_D3 = 2
    SHELVED_D2 = 3
    SHELVED_F = 4


INF = math.inf
_BRIGHT, _DARK_QUBIT, _SHELVED_D3, _SHELVED_D2, _SHELVED_F = (int(s) for s in InternalState)


@dataclass(frozen=True)
class ProtocolConfig:
    """
    One simulated detection experiment.

    Rates are detected counts per second; ``tau_B``/``tau_D`` are the
    bright->dark and dark->bright leak times and only apply to the standard
    protocol.  Use the :meth:`standard`, :meth:`d52_shelved` and
    :meth:`f72_shelved` constructors for the documented defaults.
    """

    kind: Protocol
    R_bright: float = 50e3
    R_bg: float = 500.0
    tau_B: float = INF
    tau_D: float = INF
    shelf_level: Level | None = None
    shelving_error: float | None = None
    pump: PumpModel | None = None
    pump_time: float | None = None
    detection_time: float = 1e-4
    subbins: int = 1
    constants: AtomicConstants = field(default=DEFAULT_CONSTANTS, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", Protocol(self.kind))
        if self.R_bright < 0 or self.R_bg < 0:
            raise ValueError("count rates must be non-negative")
        if not (self.tau_B > 0 and self.tau_D > 0):
            raise ValueError("leak times must be positive")
        if not self.detection_time > 0:
            raise ValueError("detection time must be positive")
        if self.subbins < 1:
            raise ValueError("need at least one subbin")
        shelf_params = (self.shelf_level, self.shelving_error, self.pump, self.pump_time)
        if self.kind is Protocol.STANDARD:
            if any(p is not None for p in shelf_params):
                raise ValueError("standard protocol takes no shelving parameters")
            return
        if math.isfinite(self.tau_B) or math.isfinite(self.tau_D):
            raise ValueError("leak times apply to the standard protocol only")
        if self.kind is Protocol.D52_SHELVED:
            if self.shelf_level is None or self.shelf_level.term is not Term.D52:
                raise ValueError("D5/2-shelved protocol needs a D5/2 shelf level")
            if self.shelving_error is None or not 0 <= self.shelving_error <= 1:
                raise ValueError("shelving error must lie in [0, 1]")
        else:
            if self.pump is None or self.pump_time is None or self.pump_time < 0:
                raise ValueError("F7/2-shelved protocol needs a pump model and pump time")

    # -- constructors ----------------------------------------------------
    @classmethod
    def standard(cls, tau_B=2e-3, tau_D=30e-3, **kw):
        return cls(Protocol.STANDARD, tau_B=tau_B, tau_D=tau_D, **kw)

    @classmethod
    def d52_shelved(cls, shelf_level=Level(Term.D52, 2, 0), shelving_error=0.007, **kw):
        return cls(Protocol.D52_SHELVED, shelf_level=shelf_level, shelving_error=shelving_error, **kw)

    @classmethod
    def f72_shelved(cls, pump=PumpModel(), pump_time=0.2, **kw):
        return cls(Protocol.F72_SHELVED, pump=pump, pump_time=pump_time, **kw)

    def with_time(self, detection_time) -> "ProtocolConfig":
        return replace(self, detection_time=detection_time)

    @property
    def shelving_success(self) -> float:
        """Probability that a dark-prepared ion starts out shelved."""
        if self.kind is Protocol.D52_SHELVED:
            return 1.0 - self.shelving_error
        if self.kind is Protocol.F72_SHELVED:
            return incoherent_pump_probability(self.pump_time, self.pump)
        return 0.0

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind.value,
            "R_bright": self.R_bright,
            "R_bg": self.R_bg,
            "tau_B": None if math.isinf(self.tau_B) else self.tau_B,
            "tau_D": None if math.isinf(self.tau_D) else self.tau_D,
            "detection_time": self.detection_time,
            "subbins": self.subbins,
        }
        if self.shelf_level is not None:
            d["shelf_level"] = {"F": self.shelf_level.F, "mF": self.shelf_level.mF}
            d["shelving_error"] = self.shelving_error
        if self.pump is not None:
            d["pump"] = {"p_inf": self.pump.p_inf, "tau_pump": self.pump.tau_pump}
            d["pump_time"] = self.pump_time
        return d


@dataclass(frozen=True)
class TimeTagStream:
    tags: np.ndarray
    true_label: Label
    trajectory: tuple[tuple[float, InternalState], ...]
    detection_time: float

    def __post_init__(self):
        object.__setattr__(self, "true_label", Label(self.true_label))

    def __len__(self):
        return len(self.tags)

    def ever_entered(self, state) -> bool:
        return any(s == state for _, s in self.trajectory)


# ---------------------------------------------------------------------------
# single trial

def _trajectory(config: ProtocolConfig, prepared: Label, rng, window: float):
    """Transition times and (int) states inside [0, window); first entry at t=0."""
    times = [0.0]
    kind = config.kind

    if kind is Protocol.STANDARD:
        state = _BRIGHT if prepared == Label.BRIGHT else _DARK_QUBIT
        states = [state]
        t = 0.0
        while True:
            tau = config.tau_B if state == _BRIGHT else config.tau_D
            if math.isinf(tau):
                break
            t += tau * rng.standard_exponential()
            if t >= window:
                break
            state = _DARK_QUBIT if state == _BRIGHT else _BRIGHT
            times.append(t)
            states.append(state)
        return times, states

    if prepared == Label.BRIGHT:
        return times, [_BRIGHT]

    shelved = rng.random() < config.shelving_success
    if not shelved:
        return times, [_BRIGHT]
    if kind is Protocol.F72_SHELVED:
        return times, [_SHELVED_F]

    shelf = config.shelf_level
    states = [_SHELVED_D3 if shelf.F == 3 else _SHELVED_D2]
    ev = sample_decay(shelf, rng, config.constants)
    if ev.delay < window:
        times.append(ev.delay)
        states.append(_BRIGHT if ev.destination.term is Term.S12 else _SHELVED_F)
    return times, states


def _photons(times, states, window, R_bright, R_bg, rng):
    if len(times) == 1:
        rate = R_bright + R_bg if states[0] == _BRIGHT else R_bg
        return _arrivals(rate * window, rng) / rate if rate > 0 else np.empty(0)

    bounds = np.array(times + [window])
    rates = np.array([R_bright + R_bg if s == _BRIGHT else R_bg for s in states])
    cum = np.zeros(len(bounds))
    np.cumsum(rates * np.diff(bounds), out=cum[1:])
    arrivals = _arrivals(cum[-1], rng)
    seg = np.searchsorted(cum, arrivals, side="right") - 1
    tags = bounds[seg] + (arrivals - cum[seg]) / rates[seg]
    return np.minimum(tags, window)


def _arrivals(total, rng):
    """Unit-rate Poisson arrival times in [0, total)."""
    if total <= 0:
        return np.empty(0)
    chunk = int(total + 5.0 * math.sqrt(total) + 8)
    arrivals = rng.standard_exponential(chunk).cumsum()
    while arrivals[-1] < total:
        more = rng.standard_exponential(chunk).cumsum() + arrivals[-1]
        arrivals = np.concatenate((arrivals, more))
    return arrivals[: np.searchsorted(arrivals, total)]


def _simulate(config, prepared, streams: rngmod.TrialStreams, index):
    window = config.detection_time
    times, states = _trajectory(config, prepared, streams.at(index, rngmod.TRAJECTORY), window)
    tags = _photons(times, states, window, config.R_bright, config.R_bg, streams.at(index, rngmod.PHOTONS))
    return times, states, tags


def simulate_trial(config: ProtocolConfig, prepared, seed=0, index=0) -> TimeTagStream:
    """
    Simulate one detection window.

    ``seed`` is the master seed and ``index`` the trial number; together
    they key the trial's random streams.
    """
    prepared = Label(prepared)
    times, states, tags = _simulate(config, prepared, rngmod.TrialStreams(seed), index)
    traj = tuple(zip(times, (InternalState(s) for s in states)))
    return TimeTagStream(tags, prepared, traj, config.detection_time)


def bin_counts(s: TimeTagStream, k: int) -> np.ndarray:
    """Counts in ``k`` equal-width bins covering [0, detection_time]."""
    if k < 1:
        raise ValueError("need at least one bin")
    idx = np.minimum((s.tags / s.detection_time * k).astype(np.int64), k - 1)
    return np.bincount(idx, minlength=k)


# ---------------------------------------------------------------------------
# batches

def schedule_labels(n_dark: int, n_bright: int, schedule="interleave") -> np.ndarray:
    """
    Preparation order.  ``"interleave"`` alternates dark/bright;
    ``("blocks", m)`` or ``"blocks:m"`` alternates m dark then m bright.
    Leftovers of the larger class are appended at the end.
    """
    if n_dark < 0 or n_bright < 0:
        raise ValueError("trial counts must be non-negative")
    if isinstance(schedule, str) and schedule.startswith("blocks"):
        m = int(schedule.split(":")[1]) if ":" in schedule else 1000
    elif isinstance(schedule, (tuple, list)) and schedule[0] == "blocks":
        m = int(schedule[1])
    elif schedule == "interleave":
        m = 1
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    if m < 1:
        raise ValueError("block size must be at least 1")
    # block j of each class occupies positions [2jm, 2jm+m) and [2jm+m, 2jm+2m)
    # until one class runs out; the remainder is appended in order
    paired = min(n_dark, n_bright)
    full = paired // m
    head = np.tile(np.repeat(np.array([Label.DARK, Label.BRIGHT], dtype=np.int8), m), full)
    d, b = n_dark - full * m, n_bright - full * m
    tail = np.concatenate((np.full(min(m, d), Label.DARK, np.int8), np.full(min(m, b), Label.BRIGHT, np.int8)))
    d, b = d - min(m, d), b - min(m, b)
    rest = np.full(d, Label.DARK, np.int8) if d else np.full(b, Label.BRIGHT, np.int8)
    return np.concatenate((head, tail, rest))


def _count_blocks(labels):
    if len(labels) == 0:
        return 0
    return int(np.count_nonzero(np.diff(labels) != 0)) + 1


def _generate_chunk(args):
    config, seed, labels, start = args
    streams = rngmod.TrialStreams(seed)
    n = len(labels)
    tag_list, tag_len = [], np.zeros(n, dtype=np.int64)
    t_times, t_states, t_len = [], [], np.zeros(n, dtype=np.int64)
    for j in range(n):
        times, states, tags = _simulate(config, Label(labels[j]), streams, start + j)
        tag_list.append(tags)
        tag_len[j] = len(tags)
        t_times.extend(times)
        t_states.extend(states)
        t_len[j] = len(times)
    tags = np.concatenate(tag_list) if tag_list else np.empty(0)
    return tags, tag_len, np.asarray(t_times, dtype=float), np.asarray(t_states, dtype=np.int8), t_len


CHUNK = 8192


@dataclass
class TrialDataset:
    """
    Ragged storage of many trials: tags of trial ``i`` are
    ``tags[tag_offsets[i]:tag_offsets[i+1]]``.
    """

    config: ProtocolConfig
    seed: int
    labels: np.ndarray
    tags: np.ndarray
    tag_offsets: np.ndarray
    traj_times: np.ndarray
    traj_states: np.ndarray
    traj_offsets: np.ndarray
    schedule: object = "interleave"

    def __len__(self):
        return len(self.labels)

    @property
    def detection_time(self):
        return self.config.detection_time

    def __getitem__(self, i) -> TimeTagStream:
        a, b = self.tag_offsets[i], self.tag_offsets[i + 1]
        p, q = self.traj_offsets[i], self.traj_offsets[i + 1]
        traj = tuple((float(t), InternalState(s)) for t, s in zip(self.traj_times[p:q], self.traj_states[p:q]))
        return TimeTagStream(self.tags[a:b].copy(), Label(self.labels[i]), traj, self.detection_time)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def trial_of_tag(self):
        return np.repeat(np.arange(len(self)), np.diff(self.tag_offsets))

    def totals(self) -> np.ndarray:
        return np.diff(self.tag_offsets)

    def counts(self, k: int) -> np.ndarray:
        """(n_trials, k) subbin counts over the full window."""
        if k < 1:
            raise ValueError("need at least one bin")
        b = np.minimum((self.tags / self.detection_time * k).astype(np.int64), k - 1)
        flat = np.bincount(self.trial_of_tag * k + b, minlength=len(self) * k)
        return flat.reshape(len(self), k)

    def truncate(self, window: float) -> "TrialDataset":
        """The same trials observed over the shorter window [0, window]."""
        if not 0 < window <= self.detection_time:
            raise ValueError("window must lie in (0, detection_time]")
        keep = self.tags < window
        trial = self.trial_of_tag
        tag_offsets = np.concatenate(([0], np.cumsum(np.bincount(trial[keep], minlength=len(self)))))
        tkeep = self.traj_times < window
        ttrial = np.repeat(np.arange(len(self)), np.diff(self.traj_offsets))
        traj_offsets = np.concatenate(([0], np.cumsum(np.bincount(ttrial[tkeep], minlength=len(self)))))
        return TrialDataset(self.config.with_time(window), self.seed, self.labels, self.tags[keep],
                            tag_offsets, self.traj_times[tkeep], self.traj_states[tkeep], traj_offsets,
                            self.schedule)

    def ever_entered(self, state) -> np.ndarray:
        ttrial = np.repeat(np.arange(len(self)), np.diff(self.traj_offsets))
        hit = np.zeros(len(self), dtype=bool)
        hit[ttrial[self.traj_states == state]] = True
        return hit

    def n_transitions(self) -> np.ndarray:
        return np.diff(self.traj_offsets) - 1

    @property
    def n_blocks(self):
        return _count_blocks(self.labels)

    def select(self, idx) -> "TrialDataset":
        idx = np.asarray(idx)
        tl = np.diff(self.tag_offsets)[idx]
        tr = np.diff(self.traj_offsets)[idx]
        tags = np.concatenate([self.tags[self.tag_offsets[i]:self.tag_offsets[i + 1]] for i in idx]) if len(idx) else np.empty(0)
        tt = np.concatenate([self.traj_times[self.traj_offsets[i]:self.traj_offsets[i + 1]] for i in idx]) if len(idx) else np.empty(0)
        ts = np.concatenate([self.traj_states[self.traj_offsets[i]:self.traj_offsets[i + 1]] for i in idx]) if len(idx) else np.empty(0, np.int8)
        return TrialDataset(self.config, self.seed, self.labels[idx], tags,
                            np.concatenate(([0], np.cumsum(tl))), tt, ts,
                            np.concatenate(([0], np.cumsum(tr))), self.schedule)

    # -- serialisation ---------------------------------------------------
    def to_csv(self, path, k: int | None = None):
        """Columns: trial_id, true_label, c0..c{k-1}."""
        k = k or self.config.subbins
        counts = self.counts(k)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial_id", "true_label"] + [f"c{i}" for i in range(k)])
            for i in range(len(self)):
                w.writerow([i, Label(self.labels[i]).name.lower()] + counts[i].tolist())

    def dump_tags(self, path):
        """Per trial: little-endian uint64 tag count followed by that many f64 seconds."""
        with open(path, "wb") as fh:
            for i in range(len(self)):
                a, b = self.tag_offsets[i], self.tag_offsets[i + 1]
                fh.write(struct.pack("<Q", int(b - a)))
                fh.write(self.tags[a:b].astype("<f8").tobytes())

    def same_as(self, other: "TrialDataset") -> bool:
        return (
            self.config == other.config and self.seed == other.seed
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.tag_offsets, other.tag_offsets)
            and np.array_equal(self.tags, other.tags)
            and np.array_equal(self.traj_times, other.traj_times)
            and np.array_equal(self.traj_states, other.traj_states)
        )


def load_tags(path) -> list[np.ndarray]:
    data = Path(path).read_bytes()
    out, pos = [], 0
    while pos < len(data):
        (n,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        out.append(np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(float))
        pos += 8 * n
    return out


def read_counts_csv(path):
    """Inverse of :meth:`TrialDataset.to_csv`: returns (labels, counts)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    labels = np.array([Label[r[1].upper()] for r in body], dtype=np.int8)
    counts = np.array([[int(c) for c in r[2:]] for r in body], dtype=np.int64).reshape(len(body), -1)
    return labels, counts


def run_batch(config: ProtocolConfig, n_dark: int, n_bright: int, schedule="interleave",
              seed=0, workers: int = 1) -> TrialDataset:
    """
    Simulate ``n_dark + n_bright`` trials in schedule order.

    Trial ``i`` uses the stream keyed by ``(seed, i)``, so the dataset is
    identical for every value of ``workers``.
    """
    labels = schedule_labels(n_dark, n_bright, schedule)
    n = len(labels)
    jobs = [(config, seed, labels[s:s + CHUNK], s) for s in range(0, n, CHUNK)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_generate_chunk, jobs))
    else:
        parts = [_generate_chunk(j) for j in jobs]

    def cat(i, dtype):
        return np.concatenate([p[i] for p in parts]).astype(dtype) if parts else np.empty(0, dtype)

    tag_len, t_len = cat(1, np.int64), cat(4, np.int64)
    return TrialDataset(
        config, seed, labels,
        cat(0, float), np.concatenate(([0], np.cumsum(tag_len))),
        cat(2, float), cat(3, np.int8), np.concatenate(([0], np.cumsum(t_len))),
        schedule,
    )
