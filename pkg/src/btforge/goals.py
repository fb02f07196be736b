"""Machine-checkable task goals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

from .model import Pose

GRASPED = "Grasped"
ON = "On"
AT_LABEL_POSE = "AtLabelPose"
AT_HOME = "AtHome"
GRIPPER_OPEN = "GripperOpen"

GOAL_KINDS = (GRASPED, ON, AT_LABEL_POSE, AT_HOME, GRIPPER_OPEN)


@dataclass(frozen=True)
class GoalPredicate:
    """``pose`` on an AtLabelPose goal is a snapshot taken when the task was made,
    so later metadata updates cannot make the goal vacuous."""

    kind: str
    obj: str | None = None
    support: str | None = None
    label: str | None = None
    pose: Pose | None = None
    tolerance: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in GOAL_KINDS:
            raise ValueError(f"unknown goal kind {self.kind!r}")
        if self.kind in (GRASPED, ON, AT_LABEL_POSE) and not self.obj:
            raise ValueError(f"{self.kind} needs an object")
        if self.kind == ON and not self.support:
            raise ValueError("On needs a support object")
        if self.kind == AT_LABEL_POSE and (self.pose is None or not self.tolerance):
            raise ValueError("AtLabelPose needs a snapshot pose and a tolerance")

    def to_json(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        for key in ("obj", "support", "label", "tolerance"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.pose is not None:
            out["pose"] = self.pose.to_json()
        return out

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> GoalPredicate:
        return cls(d["kind"], d.get("obj"), d.get("support"), d.get("label"),
                   Pose.from_json(d["pose"]) if "pose" in d else None, d.get("tolerance"))

    def __str__(self) -> str:
        if self.kind == ON:
            return f"On({self.obj}, {self.support})"
        if self.kind == AT_LABEL_POSE:
            return f"AtLabelPose({self.obj}, {self.label}, {self.tolerance})"
        if self.kind == GRASPED:
            return f"Grasped({self.obj})"
        return self.kind


def grasped(obj: str) -> GoalPredicate:
    return GoalPredicate(GRASPED, obj)


def on(top: str, bottom: str) -> GoalPredicate:
    return GoalPredicate(ON, top, bottom)


def at_label_pose(obj: str, label: str, pose: Pose, tolerance: float) -> GoalPredicate:
    return GoalPredicate(AT_LABEL_POSE, obj, label=label, pose=pose, tolerance=tolerance)


def gripper_open() -> GoalPredicate:
    return GoalPredicate(GRIPPER_OPEN)


def at_home() -> GoalPredicate:
    return GoalPredicate(AT_HOME)
