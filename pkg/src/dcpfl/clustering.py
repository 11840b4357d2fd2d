"""Hierarchical group graph: average-linkage clustering over discrepancies.

The inter-group distance is the mean of all cross pairs' base distances
(UPGMA over the original client-pair matrix). Merge distances are clamped
up to the running maximum so dendrogram cuts stay nested even when raw
average linkage is non-monotone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .discrepancy import DiscrepancyMatrix

# slack for gamma_tilde * gamma_global rounding at cut thresholds
_CUT_EPS = 1e-12


@dataclass
class MergeEvent:
    cluster_a: frozenset[int]
    cluster_b: frozenset[int]
    distance: float  # clamped, non-decreasing along the merge list


@dataclass
class GroupGraph:
    merges: list[MergeEvent]
    gamma_global: float
    n: int

    def to_json(self, path) -> None:
        payload = {
            "n": self.n,
            "gamma_global": self.gamma_global,
            "merges": [
                {"a": sorted(m.cluster_a), "b": sorted(m.cluster_b), "distance": m.distance}
                for m in self.merges
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)

    @staticmethod
    def from_json(path) -> "GroupGraph":
        with open(path) as fh:
            payload = json.load(fh)
        merges = [
            MergeEvent(frozenset(m["a"]), frozenset(m["b"]), m["distance"])
            for m in payload["merges"]
        ]
        return GroupGraph(merges, payload["gamma_global"], payload["n"])


@dataclass
class GroupStructure:
    groups: list[frozenset[int]]
    gamma_tilde: float

    def group_of(self, client: int) -> frozenset[int]:
        for g in self.groups:
            if client in g:
                return g
        raise InputError(f"client {client} not in any group")

    def as_key(self) -> tuple[tuple[int, ...], ...]:
        return tuple(sorted(tuple(sorted(g)) for g in self.groups))

    def __eq__(self, other) -> bool:
        return isinstance(other, GroupStructure) and self.as_key() == other.as_key()


def _mean_cross_distance(a: frozenset, b: frozenset, base: np.ndarray) -> float:
    total = 0.0
    for i in a:
        for j in b:
            total += base[i, j]
    return total / (len(a) * len(b))


def build_group_graph(d: DiscrepancyMatrix | np.ndarray) -> GroupGraph:
    """Agglomerate all clients into one root, recording every merge."""
    base = d.values if isinstance(d, DiscrepancyMatrix) else np.asarray(d, dtype=float)
    if np.isnan(base).any():
        raise InputError("NaN in distance matrix")
    n = base.shape[0]
    if n < 2 or base.shape != (n, n):
        raise InputError("need a square matrix with n >= 2")

    clusters = [frozenset([i]) for i in range(n)]
    merges: list[MergeEvent] = []
    running_max = 0.0
    while len(clusters) > 1:
        best = None
        for ai in range(len(clusters)):
            for bi in range(ai + 1, len(clusters)):
                dist = _mean_cross_distance(clusters[ai], clusters[bi], base)
                key = (dist, min(clusters[ai]), min(clusters[bi]))
                if best is None or key < best[0]:
                    best = (key, ai, bi)
        (dist, _, _), ai, bi = best
        a, b = clusters[ai], clusters[bi]
        if min(a) > min(b):
            a, b = b, a
        running_max = max(running_max, dist)
        merges.append(MergeEvent(a, b, running_max))
        clusters = [c for k, c in enumerate(clusters) if k not in (ai, bi)] + [a | b]
    return GroupGraph(merges, merges[-1].distance, n)


def groups_at(graph: GroupGraph, gamma_tilde: float) -> GroupStructure:
    """Cut the dendrogram at raw threshold gamma_tilde * gamma_global."""
    if not 0.0 <= gamma_tilde <= 1.0:
        raise InputError(f"gamma_tilde {gamma_tilde} out of [0, 1]")
    threshold = gamma_tilde * graph.gamma_global + _CUT_EPS
    groups = {i: frozenset([i]) for i in range(graph.n)}
    for m in graph.merges:
        if m.distance <= threshold:
            merged = m.cluster_a | m.cluster_b
            for i in merged:
                groups[i] = merged
    seen, out = set(), []
    for g in groups.values():
        key = tuple(sorted(g))
        if key not in seen:
            seen.add(key)
            out.append(g)
    out.sort(key=lambda g: min(g))
    return GroupStructure(out, gamma_tilde)
