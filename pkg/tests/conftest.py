import numpy as np
import pytest

from cloudseg.model import NetworkConfig, build_network
from cloudseg.synthetic import synthetic_patch_set


@pytest.fixture(scope="session")
def tiny_net_config():
    # 2 levels at 16px: the smallest legal geometry, cheap enough for
    # finite-difference work.
    return NetworkConfig(input_side=16, depth_schedule=(4, 8), bottleneck_depth=16)


@pytest.fixture(scope="session")
def tiny_net(tiny_net_config):
    return build_network(tiny_net_config, init="he_uniform", seed=0)


@pytest.fixture(scope="session")
def overfit_data():
    return synthetic_patch_set(8, 64, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
