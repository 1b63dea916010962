import numpy as np
import pytest
from hypothesis import settings

from stta import experiments as ex
from stta import neuralnet as nn

settings.register_profile("stta", deadline=None, max_examples=60)
settings.load_profile("stta")


@pytest.fixture(scope="session")
def space():
    return ex.default_space(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def random_params():
    return nn.init_params(3)


@pytest.fixture(scope="session")
def tiny_world(space):
    """Small pretrained checkpoint plus three short target videos, one per occlusion pattern."""
    from stta import synthworld as sw
    source = [sw.generate_video(sw.SOURCE_DOMAIN, i, 120, 21) for i in range(3)]
    ckp = nn.pretrain(None, source, nn.PretrainConfig(epochs=4, seed=1)).params
    videos = [sw.generate_video(sw.TARGET_DOMAIN, i, 240, 22, p)
              for i, p in enumerate(("lower_body_truncation", "random_block", "none"))]
    return ex.Benchmark(videos, ckp, space)
