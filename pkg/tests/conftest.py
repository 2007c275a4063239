import numpy as np
import pytest

from tagground.synthdata import SynthConfig, generate


@pytest.fixture(scope="session")
def tiny_data():
    """Small but non-trivial dataset shared by training-path tests."""
    return generate(SynthConfig(clips=120, num_classes=6, variants_per_class=2,
                                seed=11))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
