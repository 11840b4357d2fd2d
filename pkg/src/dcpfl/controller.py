"""Decision engine for dynamic clustering and layer-wise aggregation.

Walks the normalized threshold gamma_tilde down the group graph at each
detected loss-elbow, runs a one-round split trial comparing the current and
candidate structures, and owns the per-layer aggregation periods.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import GroupGraph, GroupStructure, groups_at
from .discrepancy import LayerDiscrepancyProfile
from .errors import InputError, StateError

LOW_DISCREPANCY_RATIO = 0.1


@dataclass
class TrialInfo:
    g0: GroupStructure
    g1: GroupStructure
    gamma_1: float
    t0: int  # round at which the RDP end was detected; trial runs at t0 + 1


@dataclass
class ControllerState:
    gamma_tilde: float
    active: GroupStructure
    t_sp: int
    lambda_gamma: float
    phase: str = "training"  # training | trial_pending | cooldown
    cooldown_remaining: int = 0
    trial: TrialInfo | None = None


def on_rdp_end(state: ControllerState, graph: GroupGraph, t0: int) -> dict | None:
    """Arm a split trial at the next partition-changing threshold below gamma_tilde.

    No-op when already fully split or when the step size is zero.
    """
    if state.phase != "training":
        raise StateError(f"cannot arm a trial in phase {state.phase}")
    if state.gamma_tilde <= 0.0 or state.lambda_gamma <= 0.0:
        return None
    g0 = state.active
    gamma_1 = state.gamma_tilde
    g1 = g0
    while g1 == g0 and gamma_1 > 0.0:
        gamma_1 = max(0.0, gamma_1 - state.lambda_gamma)
        g1 = groups_at(graph, gamma_1)
    if g1 == g0:
        return None  # already singletons-equivalent all the way down
    state.phase = "trial_pending"
    state.trial = TrialInfo(g0, g1, gamma_1, t0)
    return {
        "event": "trial_armed",
        "round": t0,
        "gamma_0": state.gamma_tilde,
        "gamma_1": gamma_1,
        "n_groups_candidate": len(g1.groups),
    }


def run_split_trial(
    state: ControllerState,
    losses_m0: dict[int, float],
    losses_m1: dict[int, float],
) -> tuple[str, dict]:
    """Adopt the candidate structure iff its mean client loss is strictly lower."""
    if state.phase != "trial_pending" or state.trial is None:
        raise StateError("no trial pending")
    clients = {c for g in state.trial.g0.groups for c in g}
    if set(losses_m0) != clients or set(losses_m1) != clients:
        raise StateError("trial losses missing for some clients")
    l0 = float(np.mean([losses_m0[c] for c in sorted(clients)]))
    l1 = float(np.mean([losses_m1[c] for c in sorted(clients)]))
    trial = state.trial
    state.trial = None
    if l0 > l1:
        state.gamma_tilde = trial.gamma_1
        state.active = trial.g1
        state.phase = "training"
        decision = "adopt"
    else:
        state.phase = "cooldown"
        state.cooldown_remaining = state.t_sp
        decision = "reject"
    return decision, {
        "event": f"trial_{decision}",
        "round": trial.t0 + 1,
        "loss_m0": l0,
        "loss_m1": l1,
        "gamma_1": trial.gamma_1,
    }


def tick_cooldown(state: ControllerState) -> bool:
    """Advance the cooldown by one round; True when it just expired."""
    if state.phase != "cooldown":
        return False
    state.cooldown_remaining -= 1
    if state.cooldown_remaining <= 0:
        state.phase = "training"
        return True
    return False


@dataclass
class LayerSchedule:
    """Aggregation period per (group, layer); full sync every alpha*tau rounds."""

    tau: int
    alpha: int
    phase_origin: int
    periods: dict[tuple[tuple[int, ...], int], int] = field(default_factory=dict)


def classify_layers(
    profile: LayerDiscrepancyProfile, tau: int, alpha: int
) -> dict[int, int]:
    """Period per layer: alpha*tau when discrepancy < 0.1 * model average, else tau."""
    if tau < 1 or alpha <= 1:
        raise InputError("need tau >= 1 and alpha > 1")
    if profile.per_layer.size == 0:
        raise InputError("empty layer profile")
    return {
        layer: (alpha * tau if d < LOW_DISCREPANCY_RATIO * profile.model_avg else tau)
        for layer, d in enumerate(profile.per_layer)
    }


def layers_to_aggregate(
    schedule: LayerSchedule, round_: int
) -> set[tuple[tuple[int, ...], int]]:
    """Scheduled (group, layer) pairs for this round, honoring the full-sync rule."""
    offset = round_ - schedule.phase_origin
    if offset % (schedule.alpha * schedule.tau) == 0:
        return set(schedule.periods)
    return {gl for gl, period in schedule.periods.items() if offset % period == 0}
