"""Counter-based random streams keyed by (seed, stream, draw) and indexed by particle.

Every particle owns a fixed slice of the Philox counter space, so the numbers
a particle sees do not depend on how the ensemble is chunked or scheduled.
"""

import numpy as np
from scipy.special import ndtri

STREAMS = {"x0": 1, "renoise": 2, "warmup": 3, "tilt": 4, "component": 5, "target": 6, "inverse": 7}

_MASK64 = (1 << 64) - 1


def _raw_block(seed, stream, draw, start, count, width):
    # Philox4x64 emits 4 words per counter increment; give each particle
    # ceil(width / 4) increments so consecutive particles never overlap.
    blocks = -(-width // 4)
    key = [seed & _MASK64, ((STREAMS[stream] << 40) | draw) & _MASK64]
    bg = np.random.Philox(key=key, counter=[start * blocks, 0, 0, 0])
    raw = bg.random_raw(count * blocks * 4).reshape(count, blocks * 4)
    return raw[:, :width]


def uniforms(seed, stream, draw, start, count, width):
    """Open-interval uniforms of shape ``(count, width)`` for particles ``start..start+count``."""
    raw = _raw_block(seed, stream, draw, start, count, width)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53 + 2.0**-54


def normals(seed, stream, draw, start, count, width):
    """Standard normals by inverse CDF on :func:`uniforms`."""
    return ndtri(uniforms(seed, stream, draw, start, count, width))


class ParticleStreams:
    """Random draws for the particle range ``[start, start + count)``."""

    def __init__(self, seed, start=0, count=1):
        self.seed = int(seed)
        self.start = int(start)
        self.count = int(count)

    def normals(self, stream, draw, width):
        return normals(self.seed, stream, draw, self.start, self.count, width)

    def uniforms(self, stream, draw, width):
        return uniforms(self.seed, stream, draw, self.start, self.count, width)
