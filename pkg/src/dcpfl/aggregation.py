"""Weighted per-group FedAvg aggregation at whole-model or layer granularity."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import GroupStructure
from .errors import InputError, StateError
from .nn import ModelParams

BYTES_PER_PARAM = 4  # single-precision convention for byte accounting


@dataclass
class GroupModelStore:
    group_models: dict[tuple[int, ...], ModelParams] = field(default_factory=dict)
    client_params: dict[int, ModelParams] = field(default_factory=dict)
    dataset_sizes: dict[int, int] = field(default_factory=dict)


def aggregate_layer(
    clients: list[tuple[ModelParams, int]], group_model: ModelParams, layer: int
) -> ModelParams:
    """Size-weighted average of one layer; other layers untouched."""
    if not clients:
        raise InputError("empty client list")
    total = sum(size for _, size in clients)
    if total <= 0:
        raise InputError("zero total dataset size")
    out = group_model.copy()
    out.weights[layer] = sum((size / total) * p.weights[layer] for p, size in clients)
    out.biases[layer] = sum((size / total) * p.biases[layer] for p, size in clients)
    return out


def aggregate_round(
    store: GroupModelStore,
    structure: GroupStructure,
    to_aggregate: set[tuple[tuple[int, ...], int]],
) -> dict[int, int]:
    """Aggregate every scheduled (group, layer); returns bytes uploaded per client."""
    bytes_uploaded = {c: 0 for c in store.client_params}
    for gkey, layer in sorted(to_aggregate):
        members = set(gkey)
        if not any(frozenset(gkey) == g for g in structure.groups):
            raise StateError(f"group {gkey} not present in the active structure")
        for c in members:
            if c not in store.client_params:
                raise StateError(f"no uploaded parameters for client {c}")
        clients = [(store.client_params[c], store.dataset_sizes[c]) for c in sorted(members)]
        group_model = store.group_models[gkey]
        store.group_models[gkey] = aggregate_layer(clients, group_model, layer)
        layer_bytes = BYTES_PER_PARAM * group_model.layer_size(layer)
        for c in members:
            bytes_uploaded[c] += layer_bytes
    return bytes_uploaded
