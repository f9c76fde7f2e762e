import numpy as np
import pytest

__import__("sys").path[0:0] = "."
from src.goodies import *

plural_data = [
    (0, "file", "0 files"),
    (1, "replicate", "1 replicate"),
    (2, "node", "2 nodes"),
]


@pytest.mark.parametrize("n, word, expected", plural_data)
def test_plural(n, word, expected):
    result = plural(n, word)
    print(result)
    assert result == expected


upper_rank_data = [
    (100, 0.05, 95),
    (199, 0.05, 190),
    (300, 0.05, 285),
    (19, 0.05, 19),
    (1, 0.05, 1),
    (10, 0.5, 5),
    (20, 0.1, 18),
]


@pytest.mark.parametrize("N, alpha, expected", upper_rank_data)
def test_upper_rank(N, alpha, expected):
    assert upper_rank(N, alpha) == expected


def test_derive_rng_depends_on_every_key():
    draws = {(seed, *keys): derive_rng(seed, *keys).random() for seed in (0, 1) for keys in ((0,), (1,), (0, 1))}
    assert len(set(draws.values())) == len(draws)
    assert derive_rng(3, 4, 5).random() == derive_rng(3, 4, 5).random()


def test_config_digest_ignores_key_order():
    first = config_digest({"alpha": 0.05, "h0": (0.22,), "b": None})
    second = config_digest({"b": None, "h0": (0.22,), "alpha": 0.05})
    assert first == second
    assert len(first) == 64
    assert config_digest({"alpha": 0.1, "h0": (0.22,), "b": None}) != first


def test_log_spaced():
    assert log_spaced(0.1, 1.0, 1) == pytest.approx([0.1])
    values = log_spaced(0.1, 1.0, 3)
    assert values == pytest.approx([0.1, np.sqrt(0.1), 1.0])


if __name__ == "__main__":  # pragma: no cover
    pytest.main(["-qq", __import__("sys").argv[0]])
