"""Reproducible random substreams.

Replication ``r`` of a run seeded with ``seed`` draws from
``SeedSequence(seed, spawn_key=(r,))``.  Spawn keys are hashed into
independent PCG64 states, so streams never collide and do not depend on how
replications are distributed across workers.
"""

import os

import numpy as np

WORKERS_ENV = "SVLM_WORKERS"


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(rep),))))


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
