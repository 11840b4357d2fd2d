"""Model-discrepancy metrics between client models.

Whole-model discrepancy is the mean absolute difference of min-max scaled
flat weight vectors; the per-layer variant scales each parameter block
separately. A constant-valued vector scales to all zeros (it carries no
distributional signal).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, StateError
from .nn import ModelParams


@dataclass
class DiscrepancyMatrix:
    n: int
    values: np.ndarray  # symmetric, zero diagonal
    rounds_averaged: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"c{j}" for j in range(self.n)])
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])

    @staticmethod
    def from_csv(path) -> "DiscrepancyMatrix":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            values = np.array([[float(v) for v in row] for row in reader])
        return DiscrepancyMatrix(values.shape[0], values, 0)


@dataclass
class LayerDiscrepancyProfile:
    group_id: tuple[int, ...]
    per_layer: np.ndarray
    model_avg: float


def scale(w: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; all zeros when max == min."""
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        raise InputError("cannot scale an empty vector")
    lo, hi = w.min(), w.max()
    if hi == lo:
        return np.zeros_like(w)
    return (w - lo) / (hi - lo)


def model_discrepancy(w_i: ModelParams, w_j: ModelParams) -> float:
    """Mean |scale(flat_i) - scale(flat_j)|, in [0, 1]."""
    if not w_i.same_shape(w_j):
        raise ConfigError("model shapes differ")
    a, b = scale(w_i.flatten()), scale(w_j.flatten())
    return float(np.abs(a - b).sum() / a.size)


def averaged_discrepancy_matrix(
    history: list[dict[int, ModelParams]], t_start: int
) -> DiscrepancyMatrix:
    """Mean pairwise discrepancy over the first t_start rounds of uploads."""
    if len(history) < t_start:
        raise StateError(f"history has {len(history)} rounds, need {t_start}")
    clients = sorted(history[0])
    n = len(clients)
    values = np.zeros((n, n))
    for t in range(t_start):
        round_params = history[t]
        scaled = {i: scale(round_params[i].flatten()) for i in clients}
        dim = next(iter(round_params.values())).dim()
        for a in range(n):
            for b in range(a + 1, n):
                d = float(np.abs(scaled[clients[a]] - scaled[clients[b]]).sum() / dim)
                values[a, b] += d
                values[b, a] += d
    values /= t_start
    return DiscrepancyMatrix(n, values, t_start)


def layer_discrepancy(
    group_clients: list[ModelParams], group_model: ModelParams, group_id: tuple[int, ...] = ()
) -> LayerDiscrepancyProfile:
    """Per-layer mean scaled L1 distance between members and their group model."""
    if not group_clients:
        raise ConfigError("empty group")
    for p in group_clients:
        if not p.same_shape(group_model):
            raise ConfigError("client model shape differs from group model")
    m = len(group_clients)
    per_layer = np.zeros(group_model.n_layers)
    for layer in range(group_model.n_layers):
        g = scale(group_model.flatten_layer(layer))
        dim = g.size
        for p in group_clients:
            per_layer[layer] += np.abs(scale(p.flatten_layer(layer)) - g).sum() / dim
        per_layer[layer] /= m
    return LayerDiscrepancyProfile(group_id, per_layer, float(per_layer.mean()))
