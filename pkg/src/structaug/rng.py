"""Counter-based uniforms keyed by (seed, stream, epoch, item index).

The value drawn for item ``k`` depends only on the key and ``k``, never on
how many other items were drawn or in what order, so masks are reproducible
under any iteration or chunking scheme.
"""

import numpy as np

DROP_STREAM = 0
ADD_STREAM = 1

_U64 = (1 << 64) - 1
_U32 = (1 << 32) - 1


def _key(seed, stream, epoch):
    seed = int(seed)
    if not 0 <= seed <= _U64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    stream, epoch = int(stream), int(epoch)
    if not 0 <= stream <= _U32 or not 0 <= epoch <= _U32:
        raise ValueError("stream and epoch must fit in 32 bits")
    return np.array([seed, (stream << 32) | epoch], dtype=np.uint64)


def uniforms(seed, epoch, n, stream=DROP_STREAM, start=0):
    """``n`` uniforms in [0, 1) for item indices ``start .. start+n-1``."""
    bg = np.random.Philox(key=_key(seed, stream, epoch))
    if start:
        # Philox yields four 64-bit words per counter step, one word per double
        q, r = divmod(int(start), 4)
        bg.advance(q)
        gen = np.random.Generator(bg)
        if r:
            gen.random(r)
        return gen.random(n)
    return np.random.Generator(bg).random(n)


def derive_seed(*parts):
    """Deterministic 64-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])
