"""Round-loop orchestration for DC-PFL and the baseline algorithms.

Rounds are synchronous: every client trains, uploads scheduled layers, and
downloads its group's aggregate. The simulated clock charges computation
time per trained sample and communication time for the slowest client's
transferred bytes. Everything is deterministic given the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import aggregation, controller as ctrl, data, discrepancy, nn, rdp
from .aggregation import BYTES_PER_PARAM, GroupModelStore
from .clustering import GroupGraph, GroupStructure, build_group_graph, groups_at
from .config import RunConfig
from .errors import InputError
from .rdp import LossTrace, RdpMonitor

PLATEAU_DELTA = 1e-4
PLATEAU_ROUNDS = 10


@dataclass
class RoundRecord:
    round: int
    per_client_loss: dict[int, float]
    per_client_accuracy: dict[int, float]
    mean_loss: float
    mean_accuracy: float
    gamma_tilde: float
    n_groups: int
    structure: str
    bytes_up: int
    bytes_down: int
    comp_time: float
    comm_time: float
    is_comm_round: bool
    events: list[dict] = field(default_factory=list)


@dataclass
class RunResult:
    config: RunConfig
    records: list[RoundRecord]
    trace: LossTrace
    events: list[dict]
    datasets: list[data.ClientDataset]
    kld: np.ndarray | None
    disc_matrix: discrepancy.DiscrepancyMatrix | None
    graph: GroupGraph | None
    summary: dict
    final_params: dict[int, nn.ModelParams] = field(default_factory=dict)


def _seed(cfg_seed: int, *tags: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((cfg_seed, *tags))


def _structure_str(structure: GroupStructure) -> str:
    return "|".join(",".join(str(c) for c in sorted(g)) for g in structure.groups)


def _group_key(g: frozenset[int]) -> tuple[int, ...]:
    return tuple(sorted(g))


def generate_datasets(config: RunConfig) -> list[data.ClientDataset]:
    """Per-client non-IID datasets with per-client skew drawn from the config ranges."""
    centers = data.class_centers(
        config.num_classes, config.layer_dims[0], config.center_spread, _seed(config.seed, 2)
    )
    datasets = []
    for i in range(config.n_clients):
        rng = np.random.default_rng(_seed(config.seed, 1, i))
        spec = data.SkewSpec(
            sigma_p=float(rng.uniform(config.sigma_p_min, config.sigma_p_max)),
            sigma_s=float(rng.uniform(config.sigma_s_min, config.sigma_s_max)),
            num_classes=config.num_classes,
            samples_per_client=config.samples_per_client,
        )
        datasets.append(data.make_client_dataset(spec, centers, rng, client_id=i))
    return datasets


def split_train_test(ds: data.ClientDataset, fraction: float):
    """Stratified holdout preserving the client's label distribution."""
    test_idx = []
    for c in np.unique(ds.labels):
        idx = np.flatnonzero(ds.labels == c)
        k = int(round(fraction * idx.size))
        test_idx.extend(idx[:k].tolist())
    test_mask = np.zeros(ds.n_samples, dtype=bool)
    test_mask[test_idx] = True
    return (
        ds.features[~test_mask], ds.labels[~test_mask],
        ds.features[test_mask], ds.labels[test_mask],
    )


def evaluate(params_per_client: dict[int, nn.ModelParams], test_sets: dict) -> dict[int, float]:
    """Fraction of correct argmax predictions per client."""
    accs = {}
    for i, params in params_per_client.items():
        x, y = test_sets[i]
        if x.shape[0] == 0:
            raise InputError(f"empty test set for client {i}")
        logits, _ = nn.forward(params, nn.Batch(x, y))
        accs[i] = float((logits.argmax(axis=1) == y).mean())
    return accs


def _build_group_models(store: GroupModelStore, structure: GroupStructure) -> None:
    """(Re)build each group model as the size-weighted average of its members."""
    store.group_models = {}
    for g in structure.groups:
        key = _group_key(g)
        members = sorted(g)
        clients = [(store.client_params[c], store.dataset_sizes[c]) for c in members]
        model = store.client_params[members[0]].copy()
        for layer in range(model.n_layers):
            model = aggregation.aggregate_layer(clients, model, layer)
        store.group_models[key] = model


def _download_layers(store: GroupModelStore, structure: GroupStructure, aggregated) -> dict[int, int]:
    """Push aggregated layers down to members; returns download bytes per client."""
    bytes_down = {c: 0 for c in store.client_params}
    for gkey, layer in sorted(aggregated):
        group_model = store.group_models[gkey]
        layer_bytes = BYTES_PER_PARAM * group_model.layer_size(layer)
        for c in gkey:
            store.client_params[c].weights[layer] = group_model.weights[layer].copy()
            store.client_params[c].biases[layer] = group_model.biases[layer].copy()
            bytes_down[c] += layer_bytes
    return bytes_down


def _all_layers(structure: GroupStructure, n_layers: int) -> set:
    return {(_group_key(g), layer) for g in structure.groups for layer in range(n_layers)}


def _compute_schedule(
    store: GroupModelStore, structure: GroupStructure, tau: int, alpha: int, origin: int
) -> ctrl.LayerSchedule:
    """Classify every group's layers from the current uploads (pre-download)."""
    schedule = ctrl.LayerSchedule(tau=tau, alpha=alpha, phase_origin=origin)
    for g in structure.groups:
        key = _group_key(g)
        profile = discrepancy.layer_discrepancy(
            [store.client_params[c] for c in sorted(g)], store.group_models[key], key
        )
        for layer, period in ctrl.classify_layers(profile, tau, alpha).items():
            schedule.periods[(key, layer)] = period
    return schedule


def discrepancy_kld_pearson(disc: discrepancy.DiscrepancyMatrix, kld: np.ndarray) -> float | None:
    """Pearson correlation over the upper-triangle client pairs; None if degenerate."""
    iu = np.triu_indices(disc.n, k=1)
    a, b = disc.values[iu], kld[iu]
    if a.min() == a.max() or b.min() == b.max():
        return None
    return float(np.corrcoef(a, b)[0, 1])


def run(config: RunConfig) -> RunResult:
    """Execute one simulation; fully deterministic per config."""
    config.validate()
    datasets = generate_datasets(config)
    splits = {ds.client_id: split_train_test(ds, config.test_fraction) for ds in datasets}
    train_sets = {i: (s[0], s[1]) for i, s in splits.items()}
    test_sets = {i: (s[2], s[3]) for i, s in splits.items()}
    n = config.n_clients
    n_layers = len(config.layer_dims) - 1

    init = nn.init_params(config.layer_dims, _seed(config.seed, 3))
    store = GroupModelStore(
        client_params={i: init.copy() for i in range(n)},
        dataset_sizes={i: train_sets[i][0].shape[0] for i in range(n)},
    )

    kld = data.kld_matrix(datasets) if n >= 2 else None
    kld_graph = build_group_graph(kld) if (kld is not None and config.algorithm in
                                           ("fixed_group", "naive_dynamic")) else None

    # initial structure per algorithm
    all_clients = frozenset(range(n))
    if config.algorithm == "standalone":
        structure = GroupStructure([frozenset([i]) for i in range(n)], 0.0)
    elif config.algorithm == "fixed_group" and kld_graph is not None:
        structure = groups_at(kld_graph, config.gamma_tilde)
    else:
        structure = GroupStructure([all_clients], 1.0)
    _build_group_models(store, structure)

    state = ctrl.ControllerState(
        gamma_tilde=1.0, active=structure, t_sp=config.t_sp, lambda_gamma=config.lambda_gamma
    )
    trace = LossTrace(window=config.window)
    monitor = RdpMonitor(t_obv=config.t_obv)
    is_dcpfl = config.algorithm == "dcpfl"
    capture = config.algorithm != "standalone"
    history: list[dict[int, nn.ModelParams]] = []
    graph: GroupGraph | None = None
    disc_matrix: discrepancy.DiscrepancyMatrix | None = None
    schedule: ctrl.LayerSchedule | None = None
    trial_models: dict[tuple[int, ...], nn.ModelParams] | None = None
    records: list[RoundRecord] = []
    events: list[dict] = []
    cum_comm = cum_comp = 0.0
    comm_rounds = 0
    full_model_bytes = BYTES_PER_PARAM * init.dim()

    for t in range(1, config.max_rounds + 1):
        events_t: list[dict] = []
        trial_round = (
            is_dcpfl and state.phase == "trial_pending" and state.trial is not None
            and t == state.trial.t0 + 1
        )
        if config.algorithm == "naive_dynamic" and kld_graph is not None and t == config.split_round + 1:
            structure = groups_at(kld_graph, config.gamma_tilde)
            _build_group_models(store, structure)
            events_t.append({"event": "naive_split", "round": t,
                             "n_groups": len(structure.groups)})

        # pre-training loss on the model each client currently holds
        losses = {
            i: nn.cross_entropy(store.client_params[i], nn.Batch(*train_sets[i]))
            for i in range(n)
        }

        comp_factor = 1.0
        bytes_down_extra = 0
        adopted = False
        if trial_round:
            g1 = state.trial.g1
            trained0, trained1, l0, l1 = {}, {}, {}, {}
            for i in range(n):
                x, y = train_sets[i]
                seed_it = _seed(config.seed, 4, i, t)
                trained0[i] = nn.local_train(
                    store.client_params[i], x, y,
                    config.local_epochs, config.batch_size, config.lr, seed_it,
                )
                start1 = trial_models[_group_key(g1.group_of(i))].copy()
                trained1[i] = nn.local_train(
                    start1, x, y,
                    config.local_epochs, config.batch_size, config.lr, seed_it,
                )
                l0[i] = nn.cross_entropy(trained0[i], nn.Batch(x, y))
                l1[i] = nn.cross_entropy(trained1[i], nn.Batch(x, y))
            decision, ev = ctrl.run_split_trial(state, l0, l1)
            events_t.append(ev)
            if decision == "adopt":
                adopted = True
                structure = state.active
                store.client_params = {i: trained1[i] for i in range(n)}
                _build_group_models(store, structure)
                monitor.reset(t)
            else:
                store.client_params = {i: trained0[i] for i in range(n)}
            trial_models = None
            comp_factor = 2.0
            bytes_down_extra = 2 * full_model_bytes  # both candidate models distributed
        else:
            for i in range(n):
                x, y = train_sets[i]
                store.client_params[i] = nn.local_train(
                    store.client_params[i], x, y,
                    config.local_epochs, config.batch_size, config.lr,
                    _seed(config.seed, 4, i, t),
                )

        rdp.push_loss(trace, t, [losses[i] for i in range(n)])
        if capture and t <= config.t_start:
            history.append({i: store.client_params[i].copy() for i in range(n)})

        # aggregation per schedule (warm-up rounds are full syncs)
        if config.algorithm == "standalone":
            to_agg = set()
        elif not is_dcpfl or schedule is None or adopted:
            to_agg = _all_layers(structure, n_layers)
        else:
            to_agg = ctrl.layers_to_aggregate(schedule, t)
        bytes_up = aggregation.aggregate_round(store, structure, to_agg)

        # schedule (re)computation uses the uploads, before they are overwritten
        if is_dcpfl and capture and t == config.t_start and n >= 2:
            disc_matrix = discrepancy.averaged_discrepancy_matrix(history, config.t_start)
            graph = build_group_graph(disc_matrix)
            events_t.append({"event": "graph_built", "round": t,
                             "gamma_global": graph.gamma_global})
            schedule = _compute_schedule(store, structure, config.tau, config.alpha, t)
            events_t.append({"event": "schedule_reset", "round": t})
        elif is_dcpfl and adopted:
            schedule = _compute_schedule(store, structure, config.tau, config.alpha, t)
            events_t.append({"event": "schedule_reset", "round": t})
        elif capture and not is_dcpfl and t == config.t_start and n >= 2:
            disc_matrix = discrepancy.averaged_discrepancy_matrix(history, config.t_start)

        if is_dcpfl and not trial_round and ctrl.tick_cooldown(state):
            monitor.reset(t)
            events_t.append({"event": "cooldown_over", "round": t})

        if (
            is_dcpfl and graph is not None and state.phase == "training"
            and t > config.window and state.gamma_tilde > 0.0
        ):
            t_min = rdp.check_rdp_end(monitor, trace, t)
            if t_min is not None:
                events_t.append({"event": "rdp_end", "round": t, "t_min": t_min})
                ev = ctrl.on_rdp_end(state, graph, t)
                if ev is not None:
                    events_t.append(ev)
                    # the candidate group models are built from this round's
                    # uploads, before the active structure's download
                    # overwrites them
                    trial_models = {}
                    for g in state.trial.g1.groups:
                        members = sorted(g)
                        clients = [
                            (store.client_params[c], store.dataset_sizes[c])
                            for c in members
                        ]
                        model = store.client_params[members[0]].copy()
                        for layer in range(model.n_layers):
                            model = aggregation.aggregate_layer(clients, model, layer)
                        trial_models[_group_key(g)] = model
                else:
                    monitor.reset(t)

        bytes_down = _download_layers(store, structure, to_agg)
        for i in bytes_down:
            bytes_down[i] += bytes_down_extra

        accs = evaluate(store.client_params, test_sets)
        comp_time = max(
            config.local_epochs * train_sets[i][0].shape[0] * config.comp_time_per_sample
            for i in range(n)
        ) * comp_factor
        comm_time = max(
            (bytes_up[i] + bytes_down[i]) * 8.0 / config.link_rate for i in range(n)
        )
        total_up = sum(bytes_up.values())
        is_comm = total_up > 0
        if is_comm:
            comm_rounds += 1
        cum_comp += comp_time
        cum_comm += comm_time
        events.extend(events_t)
        records.append(RoundRecord(
            round=t,
            per_client_loss=losses,
            per_client_accuracy=accs,
            mean_loss=float(np.mean([losses[i] for i in range(n)])),
            mean_accuracy=float(np.mean([accs[i] for i in range(n)])),
            gamma_tilde=state.gamma_tilde if is_dcpfl else structure.gamma_tilde,
            n_groups=len(structure.groups),
            structure=_structure_str(structure),
            bytes_up=total_up,
            bytes_down=sum(bytes_down.values()),
            comp_time=comp_time,
            comm_time=comm_time,
            is_comm_round=is_comm,
            events=events_t,
        ))

        if is_dcpfl and state.gamma_tilde == 0.0 and t >= PLATEAU_ROUNDS + 1:
            deltas = [
                trace.smoothed[k - 1] - trace.smoothed[k]
                for k in range(t - PLATEAU_ROUNDS, t)
            ]
            if all(d < PLATEAU_DELTA for d in deltas):
                events.append({"event": "converged", "round": t})
                break

    final = records[-1]
    summary = {
        "config": config.to_dict(),
        "rounds_run": len(records),
        "final_mean_accuracy": final.mean_accuracy,
        "final_per_client_accuracy": {str(i): final.per_client_accuracy[i] for i in range(n)},
        "final_mean_loss": final.mean_loss,
        "final_gamma_tilde": final.gamma_tilde,
        "final_groups": [sorted(g) for g in structure.groups],
        "group_kld": data.group_kld(datasets) if n >= 2 else None,
        "total_bytes_up": sum(r.bytes_up for r in records),
        "total_bytes_down": sum(r.bytes_down for r in records),
        "communication_rounds": comm_rounds,
        "total_comp_time_s": cum_comp,
        "total_comm_time_s": cum_comm,
        "total_time_s": cum_comp + cum_comm,
        "discrepancy_kld_pearson": (
            discrepancy_kld_pearson(disc_matrix, kld)
            if disc_matrix is not None and kld is not None else None
        ),
    }
    return RunResult(
        config=config, records=records, trace=trace, events=events, datasets=datasets,
        kld=kld, disc_matrix=disc_matrix, graph=graph, summary=summary,
        final_params={i: store.client_params[i].copy() for i in range(n)},
    )


def run_naive_dynamic(config: RunConfig) -> RunResult:
    """One group until split_round, then the configured cut for the rest of the run."""
    if config.split_round > config.max_rounds:
        raise InputError("split_round must be <= max_rounds")
    cfg = RunConfig(**{**config.to_dict(), "algorithm": "naive_dynamic"})
    return run(cfg)
