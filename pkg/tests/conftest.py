"""Shared fixtures: chains and precomputed tables reused across test modules."""
import pytest

from skipwalk.dseries import build_d_table
from skipwalk.perturbation import ChainParams, PerturbationSpec
from skipwalk.tails import compute_tails


@pytest.fixture(scope="session")
def chain_zero():
    return ChainParams(PerturbationSpec(family="zero"))


@pytest.fixture(scope="session")
def chain_b1():
    return ChainParams(PerturbationSpec(family="theorem2", beta=1.0))


@pytest.fixture(scope="session")
def chain_b2():
    return ChainParams(PerturbationSpec(family="theorem2", beta=2.0))


@pytest.fixture(scope="session")
def chain_powerlaw():
    return ChainParams(PerturbationSpec(family="powerlaw", c=0.2, alpha=0.8))


@pytest.fixture(scope="session")
def tails_b1(chain_b1):
    return compute_tails(chain_b1, 1, 60000)


@pytest.fixture(scope="session")
def dtab_b1(tails_b1):
    return build_d_table(tails_b1, m_lo=0, tol=1e-4)


@pytest.fixture(scope="session")
def tails_b2(chain_b2):
    return compute_tails(chain_b2, 1, 60000)


@pytest.fixture(scope="session")
def dtab_b2(tails_b2):
    return build_d_table(tails_b2, m_lo=0, tol=1e-4)


@pytest.fixture(scope="session")
def tails_zero(chain_zero):
    return compute_tails(chain_zero, 1, 4000)


@pytest.fixture(scope="session")
def dtab_zero(tails_zero):
    return build_d_table(tails_zero, m_lo=0, tol=1e-4)
