import numpy as np
import pytest

from qgemm_lab.rng import gen_random, make_problem


def f16(x) -> int:
    """Reference pattern of a float via numpy's float16 conversion."""
    with np.errstate(over="ignore"):
        return int(np.array(x, dtype=np.float16).view(np.uint16))


def random_patterns(seed: int, count: int) -> np.ndarray:
    return gen_random(seed, count, "raw").astype(np.uint16)


@pytest.fixture
def small_problem():
    return make_problem(11, 3, 48, 16, 16)


@pytest.fixture
def acceptance_problem():
    return make_problem(0, 4, 512, 64, 128)
