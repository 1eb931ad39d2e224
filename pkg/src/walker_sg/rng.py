"""Counter-based random streams.

Every draw is a pure function of ``(seed, counter_1, counter_2, ...)``, so a
value does not depend on how work was chunked or how many threads ran it.
The mixer is the splitmix64 finalizer applied once per counter.
"""

import numpy as np

__all__ = ["random_bits", "uniform", "STREAM_OFFSETS", "STREAM_FADING", "STREAM_QUADRATURE"]

# stream identifiers keep unrelated consumers of one seed decorrelated
STREAM_OFFSETS = 1
STREAM_FADING = 2
STREAM_QUADRATURE = 3

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _as_u64(x):
    a = np.atleast_1d(np.asarray(x))
    if a.dtype.kind == "i":
        return a.astype(np.int64).view(np.uint64)
    return a.astype(np.uint64)


def random_bits(seed, *counters):
    """64 random bits for every broadcast combination of the counters."""
    h = np.full(1, np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix(h + _GOLDEN)
        # broadcasting grows h one counter at a time, so small counters stay cheap
        for c in counters:
            h = _mix(h ^ _mix(_as_u64(c) + _GOLDEN))
    return h


def uniform(seed, *counters):
    """Uniform doubles in ``[0, 1)`` with 53 random bits each."""
    bits = random_bits(seed, *counters)
    return (bits >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)
