"""Loss-curve curvature tracking and Rapid Decrease Period detection.

The smoothed loss at round t is the mean of the raw per-round averages over
rounds max(1, t-s)..t. First/second derivatives are one-step differences of
the smoothed curve; the radius of curvature follows the classic formula
(1 + d1^2)^1.5 / d2. Rounds where |d2| < EPS_CURV have undefined curvature,
and negative-curvature rounds (d2 < 0) are ignored by the monitor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, StateError

EPS_CURV = 1e-9


def curvature_radius(d1: float, d2: float) -> float | None:
    """(1 + d1^2)^(3/2) / d2, or None when |d2| < EPS_CURV."""
    if abs(d2) < EPS_CURV:
        return None
    return (1.0 + d1 * d1) ** 1.5 / d2


@dataclass
class LossTrace:
    """Per-round raw/smoothed loss with derivative and curvature estimates.

    Rounds are 1-based; internal lists are indexed by round - 1. Undefined
    entries (too few rounds, tiny d2) are None.
    """

    window: int
    raw: list[float] = field(default_factory=list)
    smoothed: list[float] = field(default_factory=list)
    d1: list[float | None] = field(default_factory=list)
    d2: list[float | None] = field(default_factory=list)
    r: list[float | None] = field(default_factory=list)

    @property
    def last_round(self) -> int:
        return len(self.raw)

    def at(self, round_: int) -> dict:
        i = round_ - 1
        return {
            "raw": self.raw[i],
            "smoothed": self.smoothed[i],
            "d1": self.d1[i],
            "d2": self.d2[i],
            "r": self.r[i],
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["round", "raw", "smoothed", "d1", "d2", "r"])
            for t in range(1, self.last_round + 1):
                row = self.at(t)
                writer.writerow(
                    [t]
                    + [
                        "" if row[k] is None else repr(float(row[k]))
                        for k in ("raw", "smoothed", "d1", "d2", "r")
                    ]
                )


def push_loss(trace: LossTrace, round_: int, per_client_losses: list[float]) -> LossTrace:
    """Append round `round_`'s average loss and refresh derived series."""
    if round_ != trace.last_round + 1:
        raise StateError(f"expected round {trace.last_round + 1}, got {round_}")
    for i, loss in enumerate(per_client_losses):
        if not math.isfinite(loss):
            raise NumericalError(f"non-finite loss from client {i} at round {round_}")
    trace.raw.append(float(np.mean(per_client_losses)))

    start = max(1, round_ - trace.window) - 1
    trace.smoothed.append(float(np.mean(trace.raw[start:round_])))

    if round_ >= 2:
        trace.d1.append(trace.smoothed[-1] - trace.smoothed[-2])
    else:
        trace.d1.append(None)
    if round_ >= 3 and trace.d1[-2] is not None:
        trace.d2.append(trace.d1[-1] - trace.d1[-2])
    else:
        trace.d2.append(None)
    trace.r.append(None if trace.d2[-1] is None else curvature_radius(trace.d1[-1], trace.d2[-1]))
    return trace


@dataclass
class RdpMonitor:
    """Online detector for the end of a Rapid Decrease Period.

    Tracks the running minimum of usable curvature values (defined and
    positive) since the last reset; fires once t_obv consecutive usable
    values exceed it.
    """

    t_obv: int
    start_round: int = 0  # only rounds strictly after this are observed
    best_r: float | None = None
    t_min: int | None = None
    count: int = 0
    phase: str = "warming"  # warming | monitoring | ended

    def reset(self, at_round: int) -> None:
        self.start_round = at_round
        self.best_r = None
        self.t_min = None
        self.count = 0
        self.phase = "warming"

    def observe(self, round_: int, r: float | None) -> int | None:
        """Feed one round's curvature; returns t_min when the RDP ends."""
        if self.phase == "ended" or round_ <= self.start_round:
            return None
        if r is None or r <= 0:
            return None  # unusable rounds neither advance nor reset the counter
        self.phase = "monitoring"
        if self.best_r is None or r <= self.best_r:
            self.best_r = r
            self.t_min = round_
            self.count = 0
            return None
        self.count += 1
        if self.count >= self.t_obv:
            self.phase = "ended"
            return self.t_min
        return None


def check_rdp_end(monitor: RdpMonitor, trace: LossTrace, round_: int) -> int | None:
    """Observe round `round_` from the trace; returns t_min if the RDP ended."""
    if round_ <= trace.window:
        raise StateError(f"curvature monitoring starts after round {trace.window}")
    if round_ > trace.last_round:
        raise StateError(f"round {round_} not yet pushed")
    return monitor.observe(round_, trace.r[round_ - 1])
