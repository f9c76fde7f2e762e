import hashlib
import json
from math import ceil
from typing import Any, Dict

import numpy as np
from numpy.random import SeedSequence


def plural(n: int, word: str) -> str:
    return f"{n} {word}{'s'[:n^1]}"


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for a task identified by `keys`, whatever the execution order."""
    return np.random.default_rng(SeedSequence([int(seed), *map(int, keys)]))


def upper_rank(N: int, alpha: float) -> int:
    """1-based rank of the upper alpha empirical quantile among N sorted values."""
    return max(1, ceil(round(N * (1 - alpha), 9)))


def config_digest(config: Dict[str, Any]) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf8")).hexdigest()


def log_spaced(lo: float, hi: float, size: int) -> np.ndarray:
    if size == 1:
        return np.array([lo])
    return np.geomspace(lo, hi, size)
