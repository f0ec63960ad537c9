import numpy as np
import pytest

from glnn.topology import (NetworkTopology, TopologyError, build_random_graph, complete_graph,
                           resolve_connectivity, semi_sparse_connectivity)


def test_single_unit():
    t = build_random_graph(1, 1, seed=0)
    assert t.in_edges[1] == (1,)


def test_d_equals_n_is_complete():
    t = build_random_graph(4, 4, seed=3)
    assert all(t.in_edges[j] == (1, 2, 3, 4) for j in range(1, 5))
    assert t == complete_graph(4)


def test_edge_count_and_self_loops():
    t = build_random_graph(64, 3, seed=11)
    assert t.n_edges == 192
    assert all(j in t.in_edges[j] for j in range(1, 65))
    assert np.all(t.out_degrees()[1:] == 3)


def test_deterministic_given_seed():
    assert build_random_graph(20, 3, seed=5) == build_random_graph(20, 3, seed=5)
    assert build_random_graph(20, 3, seed=5) != build_random_graph(20, 3, seed=6)


def test_d_out_of_range():
    with pytest.raises(TopologyError):
        build_random_graph(3, 4, seed=0)
    with pytest.raises(TopologyError):
        build_random_graph(3, 0, seed=0)


def test_validation():
    with pytest.raises(TopologyError, match="self-loop"):
        NetworkTopology(2, [(1,), (1,)])
    with pytest.raises(TopologyError, match="duplicate"):
        NetworkTopology(2, [(1, 1), (2,)])
    with pytest.raises(TopologyError, match="out of range"):
        NetworkTopology(2, [(1, 3), (2,)])


def test_padded_arrays():
    t = NetworkTopology(3, [(1, 3), (2,), (1, 2, 3)])
    assert t.max_sources == 4
    assert t.nsrc.tolist() == [0, 3, 2, 4]
    assert t.src[1, :3].tolist() == [0, 1, 3]
    assert t.selfk.tolist()[1:] == [1, 1, 3]


def test_semi_sparse():
    assert semi_sparse_connectivity("glnn", 67) == 12
    assert semi_sparse_connectivity("rnn", 67) == 67
    assert semi_sparse_connectivity("glnn", 2) == 2
    assert semi_sparse_connectivity("gnn", 14) == 5
    assert resolve_connectivity("semi", "rnn", 67, 16) == 16
    assert resolve_connectivity("sparse", "glnn", 67, 2) == 2
    assert resolve_connectivity("full", "glnn", 67, 9) == 9


def test_json_round_trip():
    t = build_random_graph(10, 3, seed=1)
    assert NetworkTopology.from_json(t.to_json()) == t
    assert hash(NetworkTopology.from_dict(t.to_dict())) == hash(t)
