import numpy as np
import pytest

from dcpfl.aggregation import (
    BYTES_PER_PARAM,
    GroupModelStore,
    aggregate_layer,
    aggregate_round,
)
from dcpfl.clustering import GroupStructure
from dcpfl.errors import InputError, StateError
from dcpfl.nn import ModelParams, init_params


def vector_params(values):
    v = np.asarray(values, dtype=float)
    return ModelParams([v.reshape(-1, 1)], [np.zeros(v.size)])


def store_for(client_vectors, sizes=None):
    clients = {i: vector_params(v) for i, v in enumerate(client_vectors)}
    sizes = sizes or {i: 1 for i in clients}
    gkey = tuple(sorted(clients))
    group = next(iter(clients.values())).copy()
    return GroupModelStore(
        group_models={gkey: group}, client_params=clients, dataset_sizes=sizes
    ), GroupStructure([frozenset(gkey)], 1.0), gkey


def test_single_client_identity():
    p = vector_params([1.0, -2.0, 3.0])
    out = aggregate_layer([(p, 7)], vector_params([0.0, 0.0, 0.0]), 0)
    assert np.array_equal(out.weights[0], p.weights[0])


def test_equal_sizes_is_plain_mean():
    a, b = vector_params([0.0, 2.0]), vector_params([2.0, 0.0])
    out = aggregate_layer([(a, 5), (b, 5)], a.copy(), 0)
    assert np.allclose(out.weights[0].ravel(), [1.0, 1.0])


def test_size_weighting_oracle():
    # sizes 1 and 3, values 0 and 4 -> (1*0 + 3*4) / 4 = 3
    a, b = vector_params([0.0]), vector_params([4.0])
    out = aggregate_layer([(a, 1), (b, 3)], a.copy(), 0)
    assert out.weights[0].ravel()[0] == pytest.approx(3.0)


def test_untouched_layers_preserved():
    a = ModelParams([np.ones((2, 1)), np.full((1, 2), 5.0)],
                    [np.zeros(2), np.zeros(1)])
    group = ModelParams([np.full((2, 1), 9.0), np.full((1, 2), 9.0)],
                        [np.full(2, 9.0), np.full(1, 9.0)])
    out = aggregate_layer([(a, 1)], group, 1)
    assert np.all(out.weights[0] == 9.0)  # layer 0 untouched
    assert np.all(out.weights[1] == 5.0)


def test_permutation_invariance():
    rng = np.random.default_rng(3)
    clients = [(vector_params(rng.normal(size=4)), int(rng.integers(1, 9)))
               for _ in range(5)]
    base = vector_params(np.zeros(4))
    fwd = aggregate_layer(clients, base, 0)
    rev = aggregate_layer(clients[::-1], base, 0)
    assert np.allclose(fwd.weights[0], rev.weights[0])


def test_identical_clients_fixed_point():
    p = init_params([3, 4, 2], np.random.SeedSequence(0))
    clients = [(p.copy(), 10), (p.copy(), 3)]
    for layer in range(p.n_layers):
        out = aggregate_layer(clients, p.copy(), layer)
        assert np.allclose(out.weights[layer], p.weights[layer], atol=1e-15)
        assert np.allclose(out.biases[layer], p.biases[layer], atol=1e-15)


def test_empty_and_zero_size_rejected():
    with pytest.raises(InputError):
        aggregate_layer([], vector_params([0.0]), 0)
    with pytest.raises(InputError):
        aggregate_layer([(vector_params([1.0]), 0)], vector_params([0.0]), 0)


def test_aggregate_round_matches_manual_mean():
    store, structure, gkey = store_for([[0.0, 2.0], [2.0, 0.0]])
    aggregate_round(store, structure, {(gkey, 0)})
    assert np.allclose(store.group_models[gkey].weights[0].ravel(), [1.0, 1.0])


def test_aggregate_round_bytes_all_layers():
    store, structure, gkey = store_for([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    up = aggregate_round(store, structure, {(gkey, 0)})
    per_layer = BYTES_PER_PARAM * store.group_models[gkey].layer_size(0)
    assert up == {0: per_layer, 1: per_layer}


def test_aggregate_round_no_layers_zero_bytes():
    store, structure, _ = store_for([[1.0], [2.0]])
    up = aggregate_round(store, structure, set())
    assert up == {0: 0, 1: 0}
    assert np.allclose(store.group_models[(0, 1)].weights[0].ravel(), [1.0])


def test_aggregate_round_subset_of_layers():
    p = init_params([2, 3, 2], np.random.SeedSequence(1))
    clients = {0: p.copy(), 1: p.copy()}
    clients[1].weights[0] += 1.0
    gkey = (0, 1)
    store = GroupModelStore(
        group_models={gkey: p.copy()}, client_params=clients,
        dataset_sizes={0: 1, 1: 1},
    )
    structure = GroupStructure([frozenset(gkey)], 1.0)
    up = aggregate_round(store, structure, {(gkey, 0)})
    expected = BYTES_PER_PARAM * p.layer_size(0)
    assert up == {0: expected, 1: expected}
    # layer 1 was skipped: the group model keeps its old layer-1 weights
    assert np.array_equal(store.group_models[gkey].weights[1], p.weights[1])
    assert np.allclose(store.group_models[gkey].weights[0], p.weights[0] + 0.5)


def test_aggregate_round_unknown_group_rejected():
    store, structure, gkey = store_for([[1.0], [2.0]])
    with pytest.raises(StateError):
        aggregate_round(store, structure, {((0,), 0)})


def test_aggregate_round_missing_upload_rejected():
    store, structure, gkey = store_for([[1.0], [2.0]])
    del store.client_params[1]
    with pytest.raises(StateError):
        aggregate_round(store, structure, {(gkey, 0)})


def test_two_groups_aggregate_independently():
    clients = {i: vector_params([float(i)]) for i in range(4)}
    store = GroupModelStore(
        group_models={(0, 1): vector_params([0.0]), (2, 3): vector_params([0.0])},
        client_params=clients,
        dataset_sizes={i: 1 for i in range(4)},
    )
    structure = GroupStructure([frozenset({0, 1}), frozenset({2, 3})], 0.5)
    aggregate_round(store, structure, {((0, 1), 0), ((2, 3), 0)})
    assert store.group_models[(0, 1)].weights[0].ravel()[0] == pytest.approx(0.5)
    assert store.group_models[(2, 3)].weights[0].ravel()[0] == pytest.approx(2.5)
