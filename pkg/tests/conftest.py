import numpy as np
import pytest

from softmax_newton.problem import ProblemInstance
from softmax_newton.suites import random_instance, random_point


def tiny_instance(A, b, w, **meta) -> ProblemInstance:
    return ProblemInstance(np.asarray(A, float), np.asarray(b, float), np.asarray(w, float), meta)


@pytest.fixture
def pair_instance():
    """n=2, d=1, A = [[1], [-1]] with b = (1, 0) and unit weights."""
    return tiny_instance([[1.0], [-1.0]], [1.0, 0.0], [1.0, 1.0])


@pytest.fixture
def rand_inst():
    return random_instance(12, 4, seed=3)


@pytest.fixture
def rand_point():
    return random_point(4, 1.0, seed=5)
