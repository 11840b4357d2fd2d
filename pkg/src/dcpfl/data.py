"""Synthetic non-IID client datasets and label-distribution KLD.

Each client gets a primary class (sigma_p percent of its samples), a
secondary class (sigma_s percent) and the remainder spread uniformly over
the other classes. Features are per-class Gaussian blobs whose centers are
shared across clients, so heterogeneity is purely label-distributional.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError

DIST_FLOOR = 1e-6  # smoothing floor so KLD is always defined


@dataclass
class SkewSpec:
    sigma_p: float  # percent of samples in the primary class
    sigma_s: float  # percent in the secondary class
    num_classes: int
    samples_per_client: int

    def __post_init__(self):
        if self.sigma_p + self.sigma_s > 100.0:
            raise InputError(f"sigma_p + sigma_s = {self.sigma_p + self.sigma_s} exceeds 100")
        if self.num_classes < 2:
            raise InputError("need at least 2 classes")
        if self.samples_per_client < 1:
            raise InputError("need at least 1 sample per client")


@dataclass
class ClientDataset:
    client_id: int
    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)
    label_dist: np.ndarray  # (C,) smoothed empirical distribution

    @property
    def n_samples(self) -> int:
        return self.labels.shape[0]


def smooth_distribution(p: np.ndarray, floor: float = DIST_FLOOR) -> np.ndarray:
    """Floor every entry at `floor` and renormalize."""
    q = np.maximum(np.asarray(p, dtype=float), floor)
    return q / q.sum()


def class_centers(num_classes: int, feature_dim: int, spread: float, seed: int) -> np.ndarray:
    """Fixed blob centers shared by all clients of a run."""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, spread, size=(num_classes, feature_dim))


def _label_counts(spec: SkewSpec, primary: int, secondary: int) -> np.ndarray:
    """Exact per-class sample counts realizing the skew percentages."""
    n, c = spec.samples_per_client, spec.num_classes
    counts = np.zeros(c, dtype=int)
    counts[primary] = round(spec.sigma_p / 100.0 * n)
    counts[secondary] = round(spec.sigma_s / 100.0 * n)
    rest = n - counts.sum()
    others = [k for k in range(c) if k not in (primary, secondary)]
    if rest > 0 and not others:
        raise InputError("sigma_p + sigma_s < 100 but no other classes to fill")
    for i, k in enumerate(others):
        counts[k] = rest // len(others) + (1 if i < rest % len(others) else 0)
    return counts


def make_client_dataset(
    spec: SkewSpec, centers: np.ndarray, rng_seed: int, client_id: int = 0
) -> ClientDataset:
    """Generate one client's dataset; deterministic per seed."""
    rng = np.random.default_rng(rng_seed)
    c = spec.num_classes
    primary = int(rng.integers(c))
    secondary = int((primary + 1 + rng.integers(c - 1)) % c)
    counts = _label_counts(spec, primary, secondary)

    labels = np.repeat(np.arange(c), counts)
    rng.shuffle(labels)
    features = centers[labels] + rng.normal(0.0, 1.0, size=(labels.shape[0], centers.shape[1]))
    dist = smooth_distribution(counts / counts.sum())
    return ClientDataset(client_id, features, labels, dist)


def pairwise_kld(p: np.ndarray, q: np.ndarray) -> float:
    """KL divergence sum p*ln(p/q) in nats. Entries must be positive."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise InputError("distributions must have the same length")
    if (p <= 0).any() or (q <= 0).any():
        raise InputError("zero entry in distribution; smooth upstream")
    if abs(p.sum() - 1) > 1e-6 or abs(q.sum() - 1) > 1e-6:
        raise InputError("distributions must sum to 1")
    return float(np.sum(p * np.log(p / q)))


def symmetric_kld(p: np.ndarray, q: np.ndarray) -> float:
    """Half the sum of the two directed KLDs."""
    return 0.5 * (pairwise_kld(p, q) + pairwise_kld(q, p))


def group_kld(clients: list[ClientDataset]) -> float:
    """Mean symmetric KLD over all unordered client pairs."""
    if len(clients) < 2:
        raise InputError("group KLD needs at least 2 clients")
    total, pairs = 0.0, 0
    for i in range(len(clients)):
        for j in range(i + 1, len(clients)):
            total += symmetric_kld(clients[i].label_dist, clients[j].label_dist)
            pairs += 1
    return total / pairs


def kld_matrix(clients: list[ClientDataset]) -> np.ndarray:
    """Symmetric matrix of pairwise symmetric KLDs."""
    n = len(clients)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            m[i, j] = m[j, i] = symmetric_kld(clients[i].label_dist, clients[j].label_dist)
    return m


def heterogeneity_bins(kld_values: list[float]) -> tuple[float, float, float, float]:
    """Edges of three equal-length sub-intervals of the observed KLD range."""
    lo, hi = min(kld_values), max(kld_values)
    step = (hi - lo) / 3.0
    return lo, lo + step, lo + 2 * step, hi


def heterogeneity_label(kld: float, edges: tuple[float, float, float, float]) -> str:
    if kld <= edges[1]:
        return "low"
    if kld <= edges[2]:
        return "mid"
    return "high"


def export_csv(clients: list[ClientDataset], path) -> None:
    """Columnar dump: client_id, label, f0..fk."""
    d = clients[0].features.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["client_id", "label"] + [f"f{k}" for k in range(d)])
        for ds in clients:
            for x, y in zip(ds.features, ds.labels):
                writer.writerow([ds.client_id, int(y)] + [repr(float(v)) for v in x])


def import_csv(path, num_classes: int) -> list[ClientDataset]:
    """Reload datasets written by export_csv; label_dist recomputed."""
    rows: dict[int, list[tuple[int, np.ndarray]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            cid, label = int(row[0]), int(row[1])
            rows.setdefault(cid, []).append((label, np.array([float(v) for v in row[2:]])))
    clients = []
    for cid in sorted(rows):
        labels = np.array([lab for lab, _ in rows[cid]])
        features = np.stack([x for _, x in rows[cid]])
        counts = np.bincount(labels, minlength=num_classes)
        clients.append(
            ClientDataset(cid, features, labels, smooth_distribution(counts / counts.sum()))
        )
    return clients
