import numpy as np
import pytest

from thzbeam.channel import ArrayGeometry, BandConfig, Region, ScattererConfig, ScenarioConfig


def small_scenario(num_users=40, seed=3, **kw):
    """A fast scenario with the default geometry and tiny arrays."""
    base = dict(
        seed=seed, num_users=num_users,
        sub6=BandConfig(2.4e9, 20e6, 32, ArrayGeometry((1, 4, 1)), 4, 0.0),
        thz=BandConfig(100e9, 50e6, 32, ArrayGeometry((2, 2, 1)), 2, 0.0),
    )
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
