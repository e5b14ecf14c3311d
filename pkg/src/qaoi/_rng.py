"""Counter-style pseudo-random streams for the simulator.

The simulator draws from SplitMix64: the stream state advances by a fixed
odd increment ("gamma") and each output is a bit-mix of the new state.
Because the state sequence is an arithmetic progression, any contiguous
block of outputs can also be produced vectorized from the start state,
which is how the pure-numpy simulator path reproduces the compiled kernel
draw-for-draw.

Each simulation seed owns :data:`N_STREAMS` independent streams with a
fixed role assignment (see ``STREAM_*`` constants).  The kernel draws from
every stream once per slot in a fixed order regardless of the action taken,
so runs with the same seed see identical channel, token, and query
randomness under different policies (common random numbers).
"""

from __future__ import annotations

import numpy as np

_M64 = 0xFFFFFFFFFFFFFFFF
_U53 = 2.0**-53

# stream roles; the delivery/error-chain stream is drawn twice per slot
STREAM_CHANNEL = 0  # packet erasure and error-chain moves
STREAM_TOKEN = 1  # token-bucket refills
STREAM_QUERY = 2  # query-chain moves
N_STREAMS = 3


def derive_streams(seed: int, n_streams: int = N_STREAMS) -> np.ndarray:
    """Expand a 64-bit seed into per-stream (state, gamma) pairs.

    Returns a ``(n_streams, 2)`` uint64 array; column 0 is the initial
    state, column 1 the odd increment.  Uses ``numpy.random.SeedSequence``
    so nearby seeds give unrelated streams.
    """
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must fit in 64 bits, got {seed}")
    raw = np.random.SeedSequence(int(seed)).generate_state(
        2 * n_streams, dtype=np.uint64
    )
    pairs = raw.reshape(n_streams, 2).copy()
    pairs[:, 1] |= np.uint64(1)  # increments must be odd for full period
    return pairs


def splitmix64_mix(state: np.ndarray) -> np.ndarray:
    """Output mix of SplitMix64, vectorized over a uint64 array."""
    z = state.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def stream_block(state: int, gamma: int, count: int) -> np.ndarray:
    """The next ``count`` uniforms of a stream, computed in one shot.

    ``state`` is the stream state *before* the block; draw ``k`` of the
    block uses state ``state + (k+1) * gamma`` modulo 2**64, matching the
    sequential kernel which increments first and then mixes.
    """
    ks = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        states = np.uint64(state) + ks * np.uint64(gamma)
    z = splitmix64_mix(states)
    return (z >> np.uint64(11)).astype(np.float64) * _U53


def next_u01(state: int, gamma: int) -> tuple[int, float]:
    """One sequential draw: returns (new_state, uniform in [0, 1))."""
    s = (int(state) + int(gamma)) & _M64
    z = s
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    z = z ^ (z >> 31)
    return s, (z >> 11) * _U53
