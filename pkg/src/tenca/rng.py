"""Counter-based deterministic random bits.

Every value is a pure function of (key, counter): there is no generator
state to carry, so any mask or draw can be regenerated from its key alone.
The mixer is the splitmix64 finalizer, used here as a stateless hash of the
counter stream, which is the standard way to get reproducible per-cell
randomness that is independent of evaluation order.
"""

import numpy as np

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_SEED0 = 0x243F6A8885A308D3


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= _M64
    z = ((z ^ (z >> 30)) * _MIX_A) & _M64
    z = ((z ^ (z >> 27)) * _MIX_B) & _M64
    return z ^ (z >> 31)


def derive_key(*fields: int) -> int:
    """Fold integer fields into one 64-bit key.

    Absorption is sequential, so the same values in a different order (or
    position) give an unrelated key. Negative fields are taken mod 2**64.
    """
    k = mix64(_SEED0)
    for f in fields:
        k = mix64((k + _GOLDEN + (int(f) & _M64)) & _M64)
    return k


def unit_uniforms(key: int, n: int) -> np.ndarray:
    """n float64 values in [0, 1), the counter stream of ``key``.

    Value i depends only on (key, i).
    """
    idx = np.arange(1, n + 1, dtype=np.uint64)
    z = np.uint64(key & _M64) + idx * np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
    z = z ^ (z >> np.uint64(31))
    # the top 53 bits give a uniform double in [0, 1)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def spawn_numpy_rng(*fields: int) -> np.random.Generator:
    """A numpy Generator seeded from the derived key of ``fields``."""
    return np.random.default_rng(derive_key(*fields))
