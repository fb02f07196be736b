"""Perturbation studies on oracle pick-and-place samples.

Both studies time their perturbation from an unperturbed baseline run: the
injection tick is the midpoint of the window in which a given MovePose node is
Running. Paths below refer to the oracle's transport layout, where the root
Sequence starts with the grasp Selector, then the lift, then the transfer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .oracle import DatasetSample, OracleConfig, build_dataset
from .sim import ExecutionResult, Perturbation, SimParams, Status, run

APPROACH_PATH = "$.children[0].children[1].children[0].children[1]"
TRANSFER_PATH = "$.children[2].children[1]"
PICK_PLACE_KINDS = ("place_on", "stack_on")


@dataclass
class StudyRun:
    sample_id: int
    baseline: ExecutionResult
    perturbed: ExecutionResult
    perturbation: Perturbation


@dataclass
class StudySummary:
    runs: list[StudyRun]

    @property
    def success_rate(self) -> float:
        return 100.0 * sum(r.perturbed.success for r in self.runs) / len(self.runs)

    @property
    def baseline_success_rate(self) -> float:
        return 100.0 * sum(r.baseline.success for r in self.runs) / len(self.runs)

    @property
    def mean_ticks(self) -> float:
        return sum(r.perturbed.ticks_used for r in self.runs) / len(self.runs)

    @property
    def baseline_mean_ticks(self) -> float:
        return sum(r.baseline.ticks_used for r in self.runs) / len(self.runs)

    def to_json(self) -> dict:
        return {"n": len(self.runs), "success_rate": self.success_rate,
                "baseline_success_rate": self.baseline_success_rate,
                "mean_ticks": self.mean_ticks, "baseline_mean_ticks": self.baseline_mean_ticks}


def pick_place_samples(n: int, seed: int) -> list[DatasetSample]:
    return build_dataset(n, seed, cfg=OracleConfig(kind_weights={k: 1.0 for k in PICK_PLACE_KINDS}))


def running_window(result: ExecutionResult, path: str) -> tuple[int, int]:
    ticks = [t for t, p, _, s in result.trace if p == path and s == Status.RUNNING.value]
    if not ticks:
        raise ValueError(f"node {path} never ran")
    return ticks[0], ticks[-1]


def displacement_target(sample: DatasetSample, obj: str, distance: float,
                        directions: int = 16) -> tuple[float, float]:
    """A point ``distance`` away from ``obj`` on the table, clear of other objects.

    Candidate headings are tried starting from the one pointing away from the
    place target, so the move never shortens the transfer.
    """
    scene = sample.scene
    me = scene.object(obj)
    x0, y0 = me.pose.x, me.pose.y
    target = scene.object(sample.task.referents[1])
    away = math.atan2(y0 - target.pose.y, x0 - target.pose.x)
    bx0, bx1, by0, by1 = scene.table_bounds
    for k in range(directions):
        # alternate around the away heading: 0, +1, -1, +2, -2, ...
        step = (k + 1) // 2 * (1 if k % 2 else -1)
        a = away + step * 2 * math.pi / directions
        x, y = x0 + distance * math.cos(a), y0 + distance * math.sin(a)
        if not (bx0 + me.radius <= x <= bx1 - me.radius and by0 + me.radius <= y <= by1 - me.radius):
            continue
        clear = all(math.hypot(x - o.pose.x, y - o.pose.y) > me.radius + o.radius + 0.01
                    for o in scene.objects if o.id != obj)
        if clear:
            return round(x, 6), round(y, 6)
    raise ValueError(f"no free spot {distance} m from {obj}")


def displacement_study(samples: Sequence[DatasetSample], distance: float = 0.05,
                       params: SimParams | None = None) -> StudySummary:
    """Move the object being fetched by ``distance`` halfway through the approach."""
    params = params or SimParams()
    base_params = replace(params, update_metadata=True)
    runs = []
    for s in samples:
        base = run(s.target_bt, s.scene, s.spec, s.goals, base_params)
        lo, hi = running_window(base, APPROACH_PATH)
        obj = s.task.referents[0]
        x, y = displacement_target(s, obj, distance)
        pose = s.scene.object(obj).pose.with_position(x, y, s.scene.object(obj).pose.z)
        p = Perturbation((lo + hi) // 2, "displace", obj, pose)
        runs.append(StudyRun(s.index, base, run(s.target_bt, s.scene, s.spec, s.goals, params, [p]), p))
    return StudySummary(runs)


def release_study(samples: Sequence[DatasetSample], params: SimParams | None = None) -> StudySummary:
    """Open the gripper by force halfway through the transfer move."""
    params = params or SimParams()
    runs = []
    for s in samples:
        base = run(s.target_bt, s.scene, s.spec, s.goals, params)
        lo, hi = running_window(base, TRANSFER_PATH)
        p = Perturbation((lo + hi) // 2, "force_release")
        runs.append(StudyRun(s.index, base, run(s.target_bt, s.scene, s.spec, s.goals, params, [p]), p))
    return StudySummary(runs)
