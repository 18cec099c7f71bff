"""Counter-based random streams keyed by (seed, purpose, index...)."""

import numpy as np

# stream purposes; kept stable so stored runs stay reproducible
NET = 1
PROJECTOR = 2
SHUFFLE = 3
DATA = 4
STUDENT = 5
TEACHER = 6
EVAL = 7


def derive_seed(seed, *keys):
    """Derive a 64-bit child seed from ``seed`` and integer ``keys``."""
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    lo, hi = state.generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


def make_rng(seed, *keys):
    """Philox generator for ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(derive_seed(seed, *keys)))
