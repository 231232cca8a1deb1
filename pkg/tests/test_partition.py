import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dasyflexa.exceptions import InvalidArgument
from dasyflexa.partition import (gather_neighborhood, make_dependency_graph, make_partition,
                                 neighborhood_indices, scatter_neighborhood)


def test_partition_offsets():
    p = make_partition([2, 3, 1])
    assert p.total_dim == 6
    assert p.block_offsets == (0, 2, 5)
    x = np.arange(6.0)
    assert p.block(x, 1).tolist() == [2.0, 3.0, 4.0]


@pytest.mark.parametrize("sizes", [[], [2, 0], [1, -3]])
def test_partition_rejects_degenerate(sizes):
    with pytest.raises(InvalidArgument):
        make_partition(sizes)


def test_graph_self_loops_and_reverse_sets():
    g = make_dependency_graph(3, [(0, 2), (1, 0)])
    assert g.neighbor_sets == ((0, 2), (0, 1), (2,))
    assert g.reverse_sets == ((0, 1), (1,), (0, 2))
    assert g.rho() == 2


def test_graph_out_of_range():
    with pytest.raises(InvalidArgument):
        make_dependency_graph(2, [(0, 2)])


def test_gather_scatter_roundtrip():
    p = make_partition([2, 1, 3])
    g = make_dependency_graph(3, [(0, 2)])
    x = np.arange(6.0)
    xn = gather_neighborhood(x, 0, p, g)
    assert xn.tolist() == [0.0, 1.0, 3.0, 4.0, 5.0]
    assert neighborhood_indices(0, p, g).tolist() == [0, 1, 3, 4, 5]
    y = scatter_neighborhood(np.zeros(6), xn, 0, p, g)
    assert y.tolist() == [0.0, 1.0, 0.0, 3.0, 4.0, 5.0]


def test_gather_wrong_length():
    p = make_partition([2, 2])
    g = make_dependency_graph(2, [])
    with pytest.raises(InvalidArgument):
        gather_neighborhood(np.zeros(3), 0, p, g)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=6), st.data())
def test_reverse_is_transpose(sizes, data):
    n = len(sizes)
    edges = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                               max_size=12))
    g = make_dependency_graph(n, edges)
    for i, nb in enumerate(g.neighbor_sets):
        assert i in nb
        for j in nb:
            assert i in g.reverse_sets[j]
    p = make_partition(sizes)
    x = np.arange(p.total_dim, dtype=float)
    for i in range(n):
        xn = gather_neighborhood(x, i, p, g)
        assert np.array_equal(scatter_neighborhood(x, xn, i, p, g), x)
