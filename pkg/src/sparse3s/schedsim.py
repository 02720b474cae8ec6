"""Row-window scheduling across SMs and a gathered-load transaction model.

One row window is one thread block is one job. Jobs are dispatched in a
given order to whichever SM frees up first, one resident block per SM.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CostModel",
    "ScheduleTrace",
    "simulate_schedule",
    "lpt_order",
    "random_order",
    "brute_force_optimum",
    "transaction_count",
    "A30_SMS",
    "H100_SMS",
]

A30_SMS = 56
H100_SMS = 132


@dataclass(frozen=True)
class CostModel:
    """Cost of a row window with ``t`` TCBs: ``alpha + beta * t``."""

    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta <= 0:
            raise ValueError(f"need alpha >= 0 and beta > 0, got alpha={self.alpha}, beta={self.beta}")

    def costs(self, tcb_counts):
        return [self.alpha + self.beta * t for t in tcb_counts]


@dataclass
class ScheduleTrace:
    num_sms: int
    intervals: list = field(default_factory=list)  # per SM: [(rw, start, end), ...]
    makespan: float = 0.0
    active_time: list = field(default_factory=list)

    @property
    def min_active(self):
        return min(self.active_time) if self.active_time else 0.0

    @property
    def max_active(self):
        return max(self.active_time) if self.active_time else 0.0

    @property
    def imbalance_ratio(self) -> float:
        """Busiest SM's active time over the mean active time (1.0 = perfect)."""
        mean = sum(self.active_time) / self.num_sms
        return self.max_active / mean if mean > 0 else 1.0

    def summary(self) -> dict:
        return {
            "makespan": self.makespan,
            "min_active": self.min_active,
            "max_active": self.max_active,
            "imbalance_ratio": self.imbalance_ratio,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sm_id", "rw_id", "start", "end"])
        for sm, jobs in enumerate(self.intervals):
            for rw, start, end in jobs:
                w.writerow([sm, rw, _num(start), _num(end)])
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def _num(x):
    return int(x) if float(x).is_integer() else x


def _check_order(order, n):
    order = [int(i) for i in order]
    if sorted(order) != list(range(n)):
        raise ValueError(f"order is not a permutation of range({n})")
    return order


def simulate_schedule(tcb_counts, order=None, num_sms: int = A30_SMS, cost_model: CostModel = CostModel()) -> ScheduleTrace:
    """Greedy list scheduling of row windows onto ``num_sms`` SMs.

    Each job in ``order`` goes to the SM with the earliest finish time;
    ties go to the lowest SM index.
    """
    if num_sms < 1:
        raise ValueError("num_sms must be >= 1")
    costs = cost_model.costs(list(tcb_counts))
    order = list(range(len(costs))) if order is None else _check_order(order, len(costs))
    finish = [0.0] * num_sms
    intervals = [[] for _ in range(num_sms)]
    for rw in order:
        sm = min(range(num_sms), key=lambda s: (finish[s], s))
        start = finish[sm]
        end = start + costs[rw]
        intervals[sm].append((rw, start, end))
        finish[sm] = end
    active = [sum(e - s for _, s, e in jobs) for jobs in intervals]
    return ScheduleTrace(num_sms, intervals, max(finish), active)


def lpt_order(costs) -> list:
    """Indices by cost descending; equal costs keep index order."""
    costs = list(costs)
    return sorted(range(len(costs)), key=lambda i: (-costs[i], i))


def random_order(n: int, seed: int) -> list:
    return np.random.default_rng(seed).permutation(n).tolist()


def brute_force_optimum(costs, num_sms: int) -> float:
    """Exact minimum makespan over all job-to-SM assignments.

    Depth-first enumeration with pruning; limited to small instances.
    """
    costs = list(costs)
    if len(costs) > 12 or num_sms > 4:
        raise ValueError("brute force limited to 12 jobs and 4 SMs")
    if num_sms < 1:
        raise ValueError("num_sms must be >= 1")
    if not costs:
        return 0.0
    jobs = sorted(costs, reverse=True)
    loads = [0.0] * num_sms
    best = sum(jobs)

    def place(i, current):
        nonlocal best
        if current >= best:
            return
        if i == len(jobs):
            best = current
            return
        seen = set()
        for sm in range(num_sms):
            # SMs with equal load are interchangeable
            if loads[sm] in seen:
                continue
            seen.add(loads[sm])
            loads[sm] += jobs[i]
            place(i + 1, max(current, loads[sm]))
            loads[sm] -= jobs[i]

    place(0, 0.0)
    return best


def transaction_count(gather_rows: int, bytes_per_row_segment: int, remapped: bool, element_bytes: int = 2) -> int:
    """Load instructions needed to gather ``gather_rows`` row segments.

    Remapped layouts fetch a segment with 128-bit loads; otherwise every
    element (2 bytes for fp16) is its own scattered load.
    """
    if bytes_per_row_segment <= 0:
        raise ValueError("bytes_per_row_segment must be positive")
    if gather_rows < 0:
        raise ValueError("gather_rows must be nonnegative")
    if remapped:
        per_row = -(-bytes_per_row_segment // 16)
    else:
        per_row = -(-bytes_per_row_segment // element_bytes)
    return gather_rows * per_row
