import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def unit_book():
    from latent_impact import ModelParams
    return ModelParams.infinite_memory(1.0, 1.0)


@pytest.fixture
def finite_book():
    from latent_impact import ModelParams
    return ModelParams(1.0, 0.01, 0.1)
