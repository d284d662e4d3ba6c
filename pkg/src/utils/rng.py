"""
Seeded random streams.

Every experiment draws from numpy's Philox generator, a counter-based bit
generator whose streams are identical across platforms. Independent streams for
trials, methods and fresh samples are derived from (seed, *keys) through
SeedSequence, so a run's output depends only on its config.
"""

from typing import Sequence

import numpy as np

from src.core.constants import Method

STREAM_SYSTEM = 0
STREAM_INIT = 1
STREAM_SCENARIOS = 2
STREAM_VALIDATION = 3

_METHOD_KEYS = {method: idx for idx, method in enumerate(Method)}


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    entropy: Sequence[int] = [int(seed), *(int(k) for k in keys)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def method_key(method: Method) -> int:
    return _METHOD_KEYS[Method(method)]
