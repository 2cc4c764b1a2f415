"""Counter-based Gaussian streams (Philox4x32-10) with random access.

Every normal variate is a pure function of ``(seed, stream, particle, step,
slot, component)``.  Nothing is carried between calls, so the numbers a
particle sees do not depend on how particles are split among workers or in
which order chunks are processed.
"""

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

# stream tags, stored in the high byte of counter word 3
BROWNIAN = 0
INITIAL = 1
VARIANCE_MATCHED = 2
SLICES = 3
SAMPLING = 4


def philox4x32(counter, key, rounds=10):
    """Philox4x32 block function, vectorized over the counter arrays.

    Parameters
    ----------
    counter : sequence of 4 array_like of uint32
        Counter words; they are broadcast against each other.
    key : sequence of 2 int
        Key words.

    Returns
    -------
    tuple of 4 ndarray of uint32
    """
    c0, c1, c2, c3 = np.broadcast_arrays(*[np.asarray(c, dtype=np.uint32) for c in counter])
    c0, c1, c2, c3 = (c.astype(np.uint64) for c in (c0, c1, c2, c3))
    k0 = np.uint32(key[0])
    k1 = np.uint32(key[1])
    with np.errstate(over="ignore"):
        for _ in range(rounds):
            p0 = _M0 * c0
            p1 = _M1 * c2
            hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
            hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
            c0, c1, c2, c3 = (
                hi1 ^ c1 ^ np.uint64(k0),
                lo1,
                hi0 ^ c3 ^ np.uint64(k1),
                lo0,
            )
            k0 = np.uint32(k0 + _W0)
            k1 = np.uint32(k1 + _W1)
    return tuple(c.astype(np.uint32) for c in (c0, c1, c2, c3))


def _split_seed(seed):
    seed = int(seed) % (1 << 64)
    return seed & 0xFFFFFFFF, seed >> 32


def _to_unit(hi, lo):
    # 53-bit uniform on the open interval (0, 1)
    bits = (hi.astype(np.uint64) << _SHIFT32) | lo.astype(np.uint64)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def uniforms(seed, stream, particle, step, slot, n_components):
    """Uniform(0,1) variates, shape ``broadcast(particle, step, slot) + (n_components,)``."""
    particle, step, slot = np.broadcast_arrays(
        np.asarray(particle, dtype=np.int64),
        np.asarray(step, dtype=np.int64),
        np.asarray(slot, dtype=np.int64),
    )
    key = _split_seed(seed)
    n_blocks = (n_components + 1) // 2
    out = np.empty(particle.shape + (2 * n_blocks,))
    for block in range(n_blocks):
        word3 = np.uint32((stream << 24) | block)
        r0, r1, r2, r3 = philox4x32(
            (particle.astype(np.uint32), step.astype(np.uint32), slot.astype(np.uint32), word3),
            key,
        )
        out[..., 2 * block] = _to_unit(r0, r1)
        out[..., 2 * block + 1] = _to_unit(r2, r3)
    return out[..., :n_components]


def normals(seed, stream, particle, step, slot, n_components):
    """Standard normal variates addressed by counter; see :func:`uniforms`."""
    return ndtri(uniforms(seed, stream, particle, step, slot, n_components))
