import numpy as np
import pytest

from dpd_lab.signals import ComplexSignal, WaveformSpec, generate_ofdm
from dpd_lab.transmitter import IqImbalanceConfig, IqPaChain, PaModel

FS = 200e6


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_signal(rng):
    samples = rng.standard_normal(2048) + 1j * rng.standard_normal(2048)
    return ComplexSignal(0.3 * samples, FS)


@pytest.fixture
def ofdm_signal():
    return generate_ofdm(WaveformSpec(20e6, 40000, 0.5, seed=7), FS)


@pytest.fixture
def identity_chain():
    return IqPaChain(IqImbalanceConfig.ideal(), {i: PaModel.identity() for i in range(1, 10)})


def default_test_chain(noise_std: float = 0.0) -> IqPaChain:
    """The default 9-state transmitter with the noise hook off."""
    from dpd_lab.config import ExperimentConfig, build_chain

    cfg = ExperimentConfig.from_dict({"chain": {"noise_std": noise_std}})
    return build_chain(cfg)


@pytest.fixture
def default_chain():
    return default_test_chain()
