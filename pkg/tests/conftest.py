"""Shared test configuration.

Thread pinning must happen before numpy loads its BLAS so that timing tests
and bit-exact reruns see a single compute thread.
"""

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from lightcnn import tensor  # noqa: E402


@pytest.fixture
def f64():
    """Run a test in float64 mode with NaN/Inf checking on."""
    with tensor.using_dtype("float64"), tensor.using_debug(True):
        yield


@pytest.fixture
def f32():
    with tensor.using_dtype("float32"):
        yield


@pytest.fixture
def rng():
    return tensor.Rng(1234)


def pytest_configure(config):
    np.seterr(over="raise", invalid="raise", divide="raise", under="ignore")
