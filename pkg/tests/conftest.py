import numpy as np
import pytest

from rankauction import BimodalIrregular, PiecewiseLinearQuantile, TruncatedExponential, Uniform01


@pytest.fixture
def uniform():
    return Uniform01()


@pytest.fixture
def texp():
    return TruncatedExponential(1.0)


@pytest.fixture
def bimodal():
    return BimodalIrregular()


@pytest.fixture
def plq():
    return PiecewiseLinearQuantile([(0, 0), (0.5, 0.2), (1, 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_upper_envelope(x, y):
    """O(n^3) oracle: at each x_i, the highest chord between points on either side."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    env = y.copy()
    for i in range(len(x)):
        for j in range(i + 1):
            for k in range(i, len(x)):
                if j == k:
                    continue
                t = (x[i] - x[j]) / (x[k] - x[j])
                env[i] = max(env[i], (1 - t) * y[j] + t * y[k])
    return env
