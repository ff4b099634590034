import numpy as np
import pytest

from mnr.rdpg import curve_diag_line, curve_hardy_weinberg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def hw():
    return curve_hardy_weinberg()


@pytest.fixture
def diag():
    return curve_diag_line()


def random_orthogonal(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


@pytest.fixture
def orth():
    return random_orthogonal
