import numpy as np
import pytest

from streamtwin.catalog import CatalogSpec, build_catalog
from streamtwin.env import EnvConfig, StreamingEnv
from streamtwin.radio import ChannelModel, ComputeModel


@pytest.fixture(scope="session")
def small_catalog():
    return build_catalog(CatalogSpec(n_videos=20, cache_fraction=0.5), seed=3)


@pytest.fixture
def small_env(small_catalog):
    cfg = EnvConfig(n_users=3, t_max=40)
    return StreamingEnv(small_catalog, ChannelModel(), ComputeModel(), cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
