import numpy as np
import pytest

from spanaug.graph import Graph, from_edges


@pytest.fixture
def k3():
    return from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def p3():
    return from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def edge2():
    return from_edges(2, [(0, 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_graph(rng, n, p=0.3):
    a = np.triu((rng.random((n, n)) < p).astype(float), 1)
    return Graph(a + a.T)


@pytest.fixture
def make_graph():
    return random_graph
