import numpy as np
import pytest

from headblend import numerics as nx
from headblend.augment import HairBank
from headblend.config import TrainConfig
from headblend.data import load_corpus, write_synthetic_corpus


@pytest.fixture(autouse=True)
def _float64():
    nx.set_default_dtype(np.float64)
    yield
    nx.set_default_dtype(np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    write_synthetic_corpus(root, 8, 64, seed=0)
    return root


@pytest.fixture(scope="session")
def toy_corpus(toy_dir):
    return load_corpus(toy_dir / "corpus")


@pytest.fixture(scope="session")
def hair_bank(toy_dir):
    return HairBank.from_dir(toy_dir / "hair")


@pytest.fixture(scope="session")
def small_cfg():
    """32x32 config: 8x8 feature grid, four 4x4 patches."""
    return TrainConfig(resolution=32, steps=3, ckpt_every=0)


def random_mask(rng, shape, p=0.5):
    return (rng.random(shape) < p).astype(np.uint8)
