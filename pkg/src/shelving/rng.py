"""
Counter-based random streams keyed by (master seed, trial index).

Every trial owns an independent Philox stream, so a batch produces the same
numbers whatever order or process the trials are generated in.
"""
import numpy as np

# sub-stream ids, stored in the top word of the Philox counter
TRAJECTORY = 0
PHOTONS = 1
CAMERA = 2
SPLIT = 3

_MASK64 = (1 << 64) - 1


def _state(seed, index, stream, substream):
    return {
        "bit_generator": "Philox",
        "state": {
            "counter": np.array([0, 0, substream & _MASK64, stream & _MASK64], dtype=np.uint64),
            "key": np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64),
        },
        "buffer": _ZERO4,
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }


_ZERO4 = np.zeros(4, dtype=np.uint64)


def trial_rng(seed, index=0, stream=TRAJECTORY, substream=0):
    """Fresh generator for one (seed, trial, stream) triple."""
    bitgen = np.random.Philox(key=[0, 0])
    bitgen.state = _state(int(seed), int(index), stream, substream)
    return np.random.Generator(bitgen)


class TrialStreams:
    """
    Reusable generator that is re-keyed per trial.

    Re-keying a single Philox instance is an order of magnitude cheaper than
    constructing a new Generator, and yields identical streams to
    :func:`trial_rng`.
    """

    def __init__(self, seed):
        self.seed = int(seed)
        self._bitgen = np.random.Philox(key=[0, 0])
        self.generator = np.random.Generator(self._bitgen)

    def at(self, index, stream=TRAJECTORY, substream=0):
        self._bitgen.state = _state(self.seed, int(index), stream, substream)
        return self.generator


def as_generator(seed):
    """Accept an int seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return trial_rng(0 if seed is None else seed)


def derive_seed(seed, *path):
    """Deterministic child seed (uint64) for a labelled sub-experiment."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
