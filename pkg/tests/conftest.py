import numpy as np
import pytest

from hetgae.verify import six_node_fixture


@pytest.fixture
def tiny_graph():
    return six_node_fixture()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
