import numpy as np
import pytest

from armagraph.rng import make_rng
from armagraph.sparse import build_csr


def random_graph(rng, n, p=0.3, weighted=False):
    """Random symmetric adjacency for oracle comparisons."""
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                w = rng.uniform(0.2, 2.0) if weighted else 1.0
                edges.append((i, j, w))
    if not edges and n >= 2:
        edges = [(0, 1, 1.0)]
    return build_csr(n, edges)


def path2():
    return build_csr(2, [(0, 1, 1.0)])


def triangle():
    return build_csr(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def sbm_small():
    from armagraph.data import synth_sbm

    return synth_sbm(n_per_class=40, classes=2, p_in=0.3, p_out=0.05, feature_noise=0.5, seed=7)


def max_abs(a, b=None):
    a = np.asarray(a)
    if b is not None:
        a = a - np.asarray(b)
    return float(np.max(np.abs(a))) if a.size else 0.0
