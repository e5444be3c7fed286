"""Seedable, platform-independent random streams.

Every stochastic routine in the package draws from a numpy PCG64 generator
built here, so a single seed reproduces all downstream draws bit for bit,
on any platform and regardless of how work is scheduled. Unrelated modules
are kept on separate streams by spawning with fixed integer keys.
"""

from __future__ import annotations

import numpy as np

# Fixed stream labels; never reuse a label for a different purpose.
SCENARIO_STREAM = 0
INIT_STREAM = 1
EVOLVE_STREAM = 2
CVAE_STREAM = 3
HARNESS_STREAM = 4
PERTURB_STREAM = 5
BASELINE_STREAM = 6


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the PCG64 generator identified by ``(seed, *key)``.

    The same ``(seed, key)`` pair always yields an identical stream;
    distinct keys give statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
