import numpy as np
import pytest

from dcpfl import data
from dcpfl.errors import InputError


def make(spec_kwargs=None, seed=0, client_id=0, spread=1.0):
    spec = data.SkewSpec(**{
        "sigma_p": 60, "sigma_s": 40, "num_classes": 10, "samples_per_client": 100,
        **(spec_kwargs or {}),
    })
    centers = data.class_centers(spec.num_classes, 4, spread, seed=7)
    return data.make_client_dataset(spec, centers, seed, client_id)


def test_skew_spec_rejects_over_100():
    with pytest.raises(InputError):
        data.SkewSpec(sigma_p=70, sigma_s=40, num_classes=10, samples_per_client=50)


def test_primary_secondary_split_60_40():
    ds = make()
    top2 = np.sort(ds.label_dist)[::-1][:2]
    assert top2[0] == pytest.approx(0.6, abs=1e-5)
    assert top2[1] == pytest.approx(0.4, abs=1e-5)
    # every other class is at the smoothing floor
    assert np.sort(ds.label_dist)[:-2].max() < 1e-5


def test_symmetric_skew_gives_uniform():
    ds = make({"sigma_p": 10, "sigma_s": 10})
    assert np.allclose(ds.label_dist, 0.1, atol=1e-6)


def test_same_seed_identical_datasets():
    a, b = make(seed=5), make(seed=5)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.label_dist, b.label_dist)


def test_empirical_frequencies_match_declared():
    for seed in range(10):
        ds = make(seed=seed)
        counts = np.bincount(ds.labels, minlength=10)
        emp = counts / counts.sum()
        assert np.all(np.abs(emp - ds.label_dist) <= 1.0 / ds.n_samples + 1e-9)


def test_pairwise_kld_identity_is_zero():
    p = data.smooth_distribution(np.array([0.3, 0.2, 0.5]))
    assert data.pairwise_kld(p, p) == pytest.approx(0.0, abs=1e-15)


def test_pairwise_kld_oracle_values():
    p, q = np.array([0.5, 0.5]), np.array([0.9, 0.1])
    assert data.pairwise_kld(p, q) == pytest.approx(0.5108256237659907, abs=1e-10)
    assert data.pairwise_kld(q, p) == pytest.approx(0.3680642071684971, abs=1e-10)


def test_pairwise_kld_zero_entry_rejected():
    with pytest.raises(InputError):
        data.pairwise_kld(np.array([1.0, 0.0]), np.array([0.5, 0.5]))


def test_symmetric_kld_oracle_value_and_symmetry():
    p, q = np.array([0.5, 0.5]), np.array([0.9, 0.1])
    assert data.symmetric_kld(p, q) == pytest.approx(0.4394449154672439, abs=1e-10)
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = data.smooth_distribution(rng.dirichlet(np.ones(5)))
        b = data.smooth_distribution(rng.dirichlet(np.ones(5)))
        assert data.symmetric_kld(a, b) == pytest.approx(data.symmetric_kld(b, a))


def test_group_kld_identical_clients_is_zero():
    clients = [make(seed=3, client_id=i) for i in range(4)]
    assert data.group_kld(clients) == pytest.approx(0.0, abs=1e-12)


def test_group_kld_two_clients_equals_symmetric():
    a, b = make(seed=1), make(seed=2)
    assert data.group_kld([a, b]) == pytest.approx(
        data.symmetric_kld(a.label_dist, b.label_dist)
    )


def test_group_kld_three_clients_is_pair_mean():
    clients = [make(seed=s) for s in (1, 2, 3)]
    pairs = [
        data.symmetric_kld(clients[i].label_dist, clients[j].label_dist)
        for i in range(3) for j in range(i + 1, 3)
    ]
    assert data.group_kld(clients) == pytest.approx(np.mean(pairs))


def test_group_kld_needs_two_clients():
    with pytest.raises(InputError):
        data.group_kld([make()])


def test_group_kld_permutation_invariant():
    clients = [make(seed=s) for s in range(5)]
    rng = np.random.default_rng(2)
    shuffled = list(clients)
    rng.shuffle(shuffled)
    assert data.group_kld(shuffled) == pytest.approx(data.group_kld(clients))


def test_higher_skew_raises_group_kld_sign_test():
    # one-sided sign test over 20 seeds: P(X >= 15 | p=0.5) ~ 0.02
    wins = 0
    for seed in range(20):
        low = [make({"sigma_p": 20, "sigma_s": 15}, seed=100 * seed + i, client_id=i)
               for i in range(6)]
        high = [make({"sigma_p": 60, "sigma_s": 30}, seed=100 * seed + i, client_id=i)
                for i in range(6)]
        if data.group_kld(high) > data.group_kld(low):
            wins += 1
    assert wins >= 15


def test_csv_roundtrip(tmp_path):
    clients = [make(seed=s, client_id=s) for s in range(3)]
    path = tmp_path / "data.csv"
    data.export_csv(clients, path)
    loaded = data.import_csv(path, num_classes=10)
    assert len(loaded) == 3
    for orig, back in zip(clients, loaded):
        assert np.array_equal(orig.labels, back.labels)
        assert np.allclose(orig.features, back.features)
        assert np.allclose(orig.label_dist, back.label_dist)


def test_heterogeneity_bins_and_labels():
    edges = data.heterogeneity_bins([1.0, 4.0, 2.0, 7.0])
    assert edges == (1.0, 3.0, 5.0, 7.0)
    assert data.heterogeneity_label(1.5, edges) == "low"
    assert data.heterogeneity_label(4.0, edges) == "mid"
    assert data.heterogeneity_label(6.9, edges) == "high"
