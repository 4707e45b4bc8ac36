import numpy as np
import pytest

from ifofsim.nr_waveform import CarrierNumerology, DmrsConfig


@pytest.fixture
def small_num():
    """One 51-PRB carrier on a 1024-point FFT, full slot."""
    return CarrierNumerology(fft_size=1024, n_prb=51, n_carriers=1)


@pytest.fixture
def dmrs():
    return DmrsConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
