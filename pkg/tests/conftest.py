import numpy as np
import pytest

from nestcpfsk.bound import build_product_graph
from nestcpfsk.convcode import parse_generator
from nestcpfsk.cpfsk import CpfskParams
from nestcpfsk.supertrellis import build_super_trellis


@pytest.fixture(scope="session")
def g1():
    return parse_generator("6,5,1", m=2)


@pytest.fixture(scope="session")
def g2():
    return parse_generator("7,2,5", m=2)


@pytest.fixture(scope="session")
def msk():
    return CpfskParams()


@pytest.fixture(scope="session")
def stack_trellis(g1, g2, msk):
    return build_super_trellis([g1, g2], msk)


@pytest.fixture(scope="session")
def stack_graph(stack_trellis):
    return build_product_graph(stack_trellis)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
