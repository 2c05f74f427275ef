import numpy as np
import pytest

from pairdrift.model import ModelParams
from pairdrift.lyapunov import make_lyapunov_params
from pairdrift.verify import complete_ledger, search_admissible


@pytest.fixture(scope="session")
def p01():
    return ModelParams(h=0.1)


@pytest.fixture(scope="session")
def p05():
    return ModelParams(h=0.5)


@pytest.fixture(scope="session")
def lp01(p01):
    return make_lyapunov_params(p01, C=32.0, r_star=1000.0)


@pytest.fixture(scope="session")
def lp05(p05):
    return make_lyapunov_params(p05, C=16.0, r_star=1000.0)


@pytest.fixture(scope="session")
def lp01_full(lp01, p01):
    return complete_ledger(lp01, p01, samples=3000, seed=7)


@pytest.fixture(scope="session")
def lp05_full(lp05, p05):
    return complete_ledger(lp05, p05, samples=3000, seed=7)


@pytest.fixture(scope="session")
def found_ledgers():
    """Admissible ledgers from the sweep, shared by the acceptance module."""
    out = {}
    for h in (0.1, 0.5):
        out[h] = search_admissible(h, samples=1500, seed=11)
    return out


def region_points(lp, region_name, n, seed=0, z_lo=1e-4, fmax=100.0):
    """Convenience sampler shared by several test modules."""
    from pairdrift.lyapunov import Region
    from pairdrift.verify import sample_region
    rng = np.random.default_rng(seed)
    return sample_region(Region[region_name], lp, n, rng,
                         z_range=(z_lo, 1.0), r_max_factor=fmax)
