import numpy as np
import pytest

from hjhom import Cocycle, GraphSpace


def random_connected_space(rng, n_min=4, n_max=12, extra_edges=3):
    """Random connected graph with random lengths, conductances, measure."""
    n = int(rng.integers(n_min, n_max + 1))
    edges = set()
    order = rng.permutation(n)
    for i in range(1, n):
        a = int(order[i])
        b = int(order[rng.integers(0, i)])
        edges.add((min(a, b), max(a, b)))
    attempts = 0
    while len(edges) < n - 1 + extra_edges and attempts < 50 * extra_edges:
        a, b = rng.integers(0, n, size=2)
        attempts += 1
        if a != b:
            edges.add((min(int(a), int(b)), max(int(a), int(b))))
    edges = sorted(edges)
    lengths = rng.uniform(0.5, 2.0, size=len(edges))
    weights = rng.uniform(0.5, 2.0, size=len(edges))
    measure = rng.uniform(0.5, 1.5, size=n)
    measure /= measure.sum()
    return GraphSpace(n, edges, lengths, weights, measure)


def random_cocycle(space, rng, scale=1.0):
    return Cocycle(space, scale * rng.standard_normal(space.n_edges))


def random_walk(space, rng, length=8, start=None):
    verts = [int(rng.integers(space.n_vertices)) if start is None else int(start)]
    for _ in range(length):
        nbrs = space.neighbors(verts[-1])
        verts.append(int(nbrs[rng.integers(len(nbrs))]))
    return verts


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
