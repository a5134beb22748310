import numpy as np
import pytest

from hybridlinks.crypt import keygen
from hybridlinks.is_codec import CodeParams, generate_codebook
from hybridlinks.params import SystemParams
from hybridlinks.polar import PolarParams, entropy_profile


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_params():
    """ell=8 system inside the security regime (l_eps = 3)."""
    return SystemParams(n=8, p=0.11, beta=0.25, ell=8, w=2, k_s=2, t=1.0, c=2, r=32, d=2.0)


@pytest.fixture
def profile8():
    return entropy_profile(PolarParams(8, 0.11, 0.25))


@pytest.fixture
def profile16():
    return entropy_profile(PolarParams(16, 0.11, 0.25))


@pytest.fixture
def uniform_profile16():
    return entropy_profile(PolarParams(16, 0.5, 0.25))


@pytest.fixture
def codebook8():
    return generate_codebook(CodeParams(ell=8, w=2, k_s=2, t=1.0, rng_seed=7))


@pytest.fixture
def keypair_c2():
    return keygen(2, 32, "toy-hmac", seed=11)
