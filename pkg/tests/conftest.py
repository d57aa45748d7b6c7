import pytest

from tfhesim import scheme
from tfhesim.params import TfheParams, get_params
from tfhesim.torus import GadgetParams


@pytest.fixture(scope="session")
def desk_params():
    return get_params("desk-w3")


@pytest.fixture(scope="session")
def desk_keys(desk_params):
    return scheme.keygen(desk_params, seed=1234)


@pytest.fixture(scope="session")
def tiny_params():
    # zero-noise set at N=64 for exact decrypt-and-compare tests
    return TfheParams(
        name="tiny-exact",
        n=24,
        glwe_degree=64,
        glwe_dim=1,
        width=2,
        pbs_gadget=GadgetParams(8, 2),
        ks_gadget=GadgetParams(8, 2),
        noise_std_short=0.0,
        noise_std_long=0.0,
    )


@pytest.fixture(scope="session")
def tiny_keys(tiny_params):
    return scheme.keygen(tiny_params, seed=99)
