"""Counter-based random substreams.

Every stochastic routine in the package draws from a Philox generator whose
key encodes (master seed, stream kind, stream id, index).  Streams are
therefore independent by key separation, reproducible bit-for-bit, and safe
to generate in any order or in parallel.
"""

import numpy as np

# stream kinds (top byte of the second key word)
PATH = 0  # per-path / per-particle Brownian increments
INIT = 1  # initial-condition sampling
DRAW = 2  # generic Monte Carlo draws (measure sampling, quadrature nodes)

_MASK64 = (1 << 64) - 1


def substream(master_seed, kind, index=0, stream=0):
    """Philox generator keyed by (master_seed, kind, stream, index).

    index < 2**40, stream < 2**16, kind < 2**8.
    """
    if not (0 <= index < 1 << 40):
        raise ValueError("substream index out of range")
    if not (0 <= stream < 1 << 16):
        raise ValueError("substream id out of range")
    word = (kind << 56) | (stream << 40) | index
    key = [int(master_seed) & _MASK64, word]
    return np.random.Generator(np.random.Philox(key=key))


def path_normals(master_seed, n_paths, n_steps, dim, stream=0):
    """Standard-normal increments, one keyed substream per path.

    Returns an (n_paths, n_steps, dim) array; row i depends only on
    (master_seed, stream, i), so permuting path indices permutes rows exactly.
    """
    out = np.empty((n_paths, n_steps, dim))
    for i in range(n_paths):
        g = substream(master_seed, PATH, i, stream)
        out[i] = g.standard_normal((n_steps, dim))
    return out
