import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lyapta.problem import build, load_problem
from lyapta.system import QuadraticLyapunov, VectorField
from lyapta.partition import SliceFamily, build_partition

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

BUNDLED = ["oned_stable", "oned_unstable", "oned_cubic", "twod_quadrant", "twod_saddle",
           "twod_coupled", "twod_single_family"]


@pytest.fixture(scope="session")
def abstractions():
    cache = {}

    def get(name, mode=None):
        key = (name, mode)
        if key not in cache:
            cache[key] = build(load_problem(f"bundled:{name}"), mode=mode)
        return cache[key]
    return get


@pytest.fixture(scope="session")
def oned():
    field = VectorField.linear([[-1.0]])
    fam = SliceFamily(QuadraticLyapunov([[1.0]], index=1), (1, 2, 4))
    part = build_partition([fam], [(-2.5, 2.5)], 0.01)
    return field, fam, part


@pytest.fixture(scope="session")
def quadrant():
    field = VectorField.linear(np.diag([-1.0, -2.0]))
    f1 = SliceFamily(QuadraticLyapunov(np.diag([1.0, 0.0]), 1, [0]), (0.25, 1))
    f2 = SliceFamily(QuadraticLyapunov(np.diag([0.0, 1.0]), 2, [1]), (0.25, 1))
    part = build_partition([f1, f2], [(-1.25, 1.25)] * 2, 0.01)
    return field, (f1, f2), part
