"""Counter-based random streams.

Every stochastic component (sampling, initialization, label noise, DP noise)
draws from its own Philox stream derived from (seed, stream id), so replaying
a run with the same seed reproduces every draw bit-for-bit and no two
components ever share state.
"""

import numpy as np

# Fixed stream ids; adding a new consumer means adding a new id, never
# reusing one.
STREAM_INIT = 0
STREAM_SAMPLER = 1
STREAM_NOISE = 2
STREAM_SYNTH = 3
STREAM_LABEL_RR = 4

_INV_TWO53 = 1.0 / float(2**53)


def philox_generator(seed: int, stream: int = 0) -> np.random.Generator:
    """numpy Generator backed by an independent Philox stream."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


class GaussianSampler:
    """Standard normal variates via Box-Muller over raw Philox output.

    Using an explicit Box-Muller transform on the raw 64-bit counter stream
    (instead of numpy's ziggurat sampler) pins the exact noise sequence to
    (seed, stream) independently of the numpy version.
    """

    def __init__(self, seed: int, stream: int = STREAM_NOISE):
        ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
        self._bits = np.random.Philox(ss)

    def standard_normal(self, n: int) -> np.ndarray:
        if n <= 0:
            return np.zeros(0)
        half = (n + 1) // 2
        raw = self._bits.random_raw(2 * half)
        # u1 in (0, 1] so log() is finite; u2 in [0, 1).
        u1 = ((raw[:half] >> 11) + 1) * _INV_TWO53
        u2 = (raw[half:] >> 11) * _INV_TWO53
        radius = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        out = np.empty(n)
        out[:half] = radius * np.cos(theta)
        out[half:] = (radius * np.sin(theta))[: n - half]
        return out
