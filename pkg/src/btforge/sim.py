"""Kinematic tabletop simulator and reactive tick engine.

Node semantics:

* Selector is reactive: every tick it re-runs its children from the left and
  returns the first non-Failure status, halting any children to the right.
* Sequence has memory: it resumes at the first child that has not yet
  succeeded. Its memory, and that of its whole subtree, is cleared whenever it
  returns Success or Failure.
* Parallel ticks every child and succeeds as soon as one child succeeds; it
  fails only when all children fail.

One simulation cycle is: apply due perturbations, tick the tree (leaves issue
commands), then step the world by the issued commands.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .goals import AT_HOME, AT_LABEL_POSE, GRASPED, GRIPPER_OPEN, ON, GoalPredicate
from .model import (
    ArgExpr,
    BTNode,
    NodeKind,
    Pose,
    SystemSpecification,
    UnknownLabel,
    quat_angle,
    quat_conj,
    quat_mul,
    quat_rotate,
    quat_slerp,
    resolve_arg,
)
from .scene import Scene


class UnknownPrimitive(LookupError):
    def __init__(self, name: str):
        super().__init__(f"no simulator semantics for primitive {name!r}")
        self.name = name


class Status(str, Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"
    RUNNING = "Running"


class Verdict(str, Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"
    TIMEOUT = "Timeout"


EXIT_CODES = {Verdict.SUCCESS: 0, Verdict.FAILURE: 1, Verdict.TIMEOUT: 5}


@dataclass(frozen=True)
class SimParams:
    step_speed: float = 0.05
    pos_tol: float = 0.005
    rot_tol: float = 0.05
    grasp_radius: float = 0.03
    on_radius: float = 0.03
    contact_tol: float = 0.002
    max_ticks: int = 2000
    # False reproduces a perception layer that never reports perturbations
    update_metadata: bool = True

    def __post_init__(self) -> None:
        for name in ("step_speed", "pos_tol", "rot_tol", "grasp_radius", "on_radius",
                     "contact_tol", "max_ticks"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class ObjectGeom:
    height: float
    radius: float


@dataclass
class WorldState:
    gripper_pose: Pose
    gripper_open: bool
    grasped: str | None
    object_poses: dict[str, Pose]
    tick_index: int = 0
    contact: bool = False
    geometry: Mapping[str, ObjectGeom] = field(default_factory=dict, repr=False)
    # held object's pose expressed in the gripper frame
    grasp_offset: Pose | None = None

    def copy(self) -> WorldState:
        return replace(self, object_poses=dict(self.object_poses))


@dataclass(frozen=True)
class Perturbation:
    at_tick: int
    action: str  # "displace" | "force_release"
    obj: str | None = None
    pose: Pose | None = None

    def __post_init__(self) -> None:
        if self.at_tick < 0:
            raise ValueError("at_tick must be >= 0")
        if self.action not in ("displace", "force_release"):
            raise ValueError(f"unknown perturbation {self.action!r}")
        if self.action == "displace" and (self.obj is None or self.pose is None):
            raise ValueError("displace needs an object id and a pose")

    def to_json(self) -> dict:
        out: dict = {"at_tick": self.at_tick, "action": self.action}
        if self.obj is not None:
            out["object"] = self.obj
        if self.pose is not None:
            out["pose"] = self.pose.to_json()
        return out

    @classmethod
    def from_json(cls, d: Mapping) -> Perturbation:
        return cls(int(d["at_tick"]), d["action"], d.get("object"),
                   Pose.from_json(d["pose"]) if "pose" in d else None)


@dataclass(frozen=True)
class Command:
    name: str
    args: tuple[ArgExpr, ...] = ()


@dataclass
class TickMemory:
    params: SimParams = field(default_factory=SimParams)
    state: dict[str, int | bool] = field(default_factory=dict)
    commands: list[Command] = field(default_factory=list)
    trace: list[tuple[int, str, str, str]] = field(default_factory=list)
    tick_index: int = 0
    record: bool = True

    def begin(self, tick_index: int) -> None:
        self.tick_index = tick_index
        self.commands = []

    def reset(self, path: str) -> None:
        prefix = path + "."
        for key in [k for k in self.state if k == path or k.startswith(prefix)]:
            del self.state[key]


# --------------------------------------------------------------------------- geometry


def _hdist(a: Pose, b: Pose) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def _dist(a: Pose, b: Pose) -> float:
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def pose_reached(current: Pose, target: Pose, params: SimParams) -> bool:
    return (_dist(current, target) <= params.pos_tol
            and quat_angle(current.quat, target.quat) <= params.rot_tol)


def support_top(world: WorldState, x: float, y: float, radius: float, exclude: str | None,
                table_height: float) -> float:
    """Top of the highest resting object whose footprint overlaps the disc."""
    top = table_height
    for oid, pose in world.object_poses.items():
        if oid == exclude or oid == world.grasped:
            continue
        g = world.geometry[oid]
        if math.hypot(pose.x - x, pose.y - y) < radius + g.radius:
            top = max(top, pose.z + g.height / 2)
    return top


def _stop_height(world: WorldState, spec: SystemSpecification) -> float:
    """Gripper z at which a downward move makes contact."""
    g = world.gripper_pose
    if world.grasped is not None:
        held = world.object_poses[world.grasped]
        geom = world.geometry[world.grasped]
        base = support_top(world, held.x, held.y, geom.radius, world.grasped, spec.table_height)
        return g.z - ((held.z - geom.height / 2) - base)
    best = spec.table_height
    for oid, pose in world.object_poses.items():
        geom = world.geometry[oid]
        if math.hypot(pose.x - g.x, pose.y - g.y) < geom.radius:
            best = max(best, pose.z)
    return best


def _update_contact(world: WorldState, spec: SystemSpecification, params: SimParams) -> None:
    world.contact = world.gripper_pose.z - _stop_height(world, spec) <= params.contact_tol


def _settle(world: WorldState, obj: str, spec: SystemSpecification, update_metadata: bool) -> None:
    pose = world.object_poses[obj]
    geom = world.geometry[obj]
    z = support_top(world, pose.x, pose.y, geom.radius, obj, spec.table_height) + geom.height / 2
    settled = pose.with_position(pose.x, pose.y, z)
    world.object_poses[obj] = settled
    if update_metadata and obj in spec.metadata:
        spec.metadata[obj] = settled


def _release(world: WorldState, spec: SystemSpecification, update_metadata: bool) -> None:
    obj = world.grasped
    world.grasped = None
    world.grasp_offset = None
    if obj is not None:
        _settle(world, obj, spec, update_metadata)


def _carry(world: WorldState) -> None:
    if world.grasped is None or world.grasp_offset is None:
        return
    g, off = world.gripper_pose, world.grasp_offset
    dx, dy, dz = quat_rotate(g.quat, off.position)
    q = quat_mul(g.quat, off.quat)
    world.object_poses[world.grasped] = Pose(g.x + dx, g.y + dy, g.z + dz, *q)


def _grasp(world: WorldState, params: SimParams) -> None:
    g = world.gripper_pose
    candidates = sorted(
        (_dist(g, p), oid) for oid, p in world.object_poses.items() if _dist(g, p) <= params.grasp_radius
    )
    if not candidates:
        return
    oid = candidates[0][1]
    o = world.object_poses[oid]
    inv = quat_conj(g.quat)
    local = quat_rotate(inv, (o.x - g.x, o.y - g.y, o.z - g.z))
    world.grasped = oid
    world.grasp_offset = Pose(*local, *quat_mul(inv, o.quat))


# --------------------------------------------------------------------------- world


def initial_world(scene: Scene, spec: SystemSpecification) -> WorldState:
    """Gripper spawns open at the home pose."""
    geometry = {o.id: ObjectGeom(o.height, o.radius) for o in scene.objects}
    world = WorldState(
        gripper_pose=spec.metadata[spec.home_label],
        gripper_open=True,
        grasped=None,
        object_poses={o.id: o.pose for o in scene.objects},
        geometry=geometry,
    )
    _update_contact(world, spec, SimParams())
    return world


def eval_condition(name: str, args: Sequence[ArgExpr], world: WorldState,
                   spec: SystemSpecification, params: SimParams) -> bool:
    if name == "is_at_pose":
        if len(args) != 1:
            raise UnknownPrimitive(f"{name}/{len(args)}")
        return pose_reached(world.gripper_pose, resolve_arg(args[0], spec), params)
    if name == "is_grasped":
        return world.grasped is not None
    if name == "is_contact":
        return world.contact
    if name == "is_at_home":
        return pose_reached(world.gripper_pose, resolve_arg(ArgExpr(spec.home_label), spec), params)
    raise UnknownPrimitive(name)


def _tick_action(node: BTNode, path: str, world: WorldState, spec: SystemSpecification,
                 mem: TickMemory) -> Status:
    name = node.name
    if name == "MovePose":
        if len(node.args) != 1:
            raise UnknownPrimitive(f"{name}/{len(node.args)}")
        if pose_reached(world.gripper_pose, resolve_arg(node.args[0], spec), mem.params):
            return Status.SUCCESS
        mem.commands.append(Command(name, node.args))
        return Status.RUNNING
    if name in ("OpenGripper", "CloseGripper"):
        if mem.state.get(path):
            del mem.state[path]
            return Status.SUCCESS
        mem.state[path] = True
        mem.commands.append(Command(name))
        return Status.RUNNING
    if name == "MoveDown":
        if world.contact:
            return Status.SUCCESS
        mem.commands.append(Command(name))
        return Status.RUNNING
    raise UnknownPrimitive(name or "")


def _tick(node: BTNode, path: str, world: WorldState, spec: SystemSpecification,
          mem: TickMemory) -> Status:
    kind = node.kind
    if kind is NodeKind.CONDITION:
        ok = eval_condition(node.name or "", node.args, world, spec, mem.params)
        status = Status.SUCCESS if ok else Status.FAILURE
    elif kind is NodeKind.ACTION:
        status = _tick_action(node, path, world, spec, mem)
    elif kind is NodeKind.SELECTOR:
        status = Status.FAILURE
        for i, child in enumerate(node.children):
            s = _tick(child, f"{path}.children[{i}]", world, spec, mem)
            if s is not Status.FAILURE:
                for j in range(i + 1, len(node.children)):
                    mem.reset(f"{path}.children[{j}]")
                status = s
                break
    elif kind is NodeKind.SEQUENCE:
        idx = int(mem.state.get(path, 0))
        status = Status.SUCCESS
        while idx < len(node.children):
            s = _tick(node.children[idx], f"{path}.children[{idx}]", world, spec, mem)
            if s is Status.SUCCESS:
                idx += 1
                continue
            status = s
            break
        if status is Status.RUNNING:
            mem.state[path] = idx
        else:
            mem.reset(path)
    else:  # Parallel
        results = [_tick(c, f"{path}.children[{i}]", world, spec, mem)
                   for i, c in enumerate(node.children)]
        if Status.SUCCESS in results:
            status = Status.SUCCESS
        elif all(r is Status.FAILURE for r in results):
            status = Status.FAILURE
        else:
            status = Status.RUNNING
        if status is not Status.RUNNING:
            mem.reset(path)
    if mem.record:
        mem.trace.append((mem.tick_index, path, node.label, status.value))
    return status


def tick(bt: BTNode, world: WorldState, spec: SystemSpecification, mem: TickMemory) -> Status:
    """Tick the tree once; issued commands accumulate in ``mem.commands``."""
    return _tick(bt, "$", world, spec, mem)


def step_primitives(world: WorldState, commands: Iterable[Command], spec: SystemSpecification,
                    params: SimParams) -> WorldState:
    """Advance the world by one step under the given commands."""
    w = world.copy()
    for cmd in commands:
        if cmd.name == "MovePose":
            target = resolve_arg(cmd.args[0], spec)
            g = w.gripper_pose
            d = _dist(g, target)
            if d <= params.step_speed:
                w.gripper_pose = target
            else:
                f = params.step_speed / d
                q = quat_slerp(g.quat, target.quat, f)
                w.gripper_pose = Pose(g.x + f * (target.x - g.x), g.y + f * (target.y - g.y),
                                      g.z + f * (target.z - g.z), *q)
            _carry(w)
        elif cmd.name == "MoveDown":
            stop = _stop_height(w, spec)
            g = w.gripper_pose
            drop = min(params.step_speed, max(0.0, g.z - stop))
            w.gripper_pose = g.with_position(g.x, g.y, g.z - drop)
            _carry(w)
        elif cmd.name == "OpenGripper":
            w.gripper_open = True
            _release(w, spec, update_metadata=True)
        elif cmd.name == "CloseGripper":
            w.gripper_open = False
            if w.grasped is None:
                _grasp(w, params)
        else:
            raise UnknownPrimitive(cmd.name)
    _update_contact(w, spec, params)
    return w


def apply_perturbation(world: WorldState, p: Perturbation, spec: SystemSpecification,
                       params: SimParams) -> WorldState:
    w = world.copy()
    if p.action == "force_release":
        _release(w, spec, params.update_metadata)
    else:
        assert p.obj is not None and p.pose is not None
        if w.grasped == p.obj:
            w.grasped = None
            w.grasp_offset = None
        w.object_poses[p.obj] = p.pose
        _settle(w, p.obj, spec, params.update_metadata)
    _update_contact(w, spec, params)
    return w


# --------------------------------------------------------------------------- goals


def goal_holds(goal: GoalPredicate, world: WorldState, spec: SystemSpecification,
               params: SimParams) -> bool:
    if goal.kind == GRASPED:
        return world.grasped == goal.obj
    if goal.kind == GRIPPER_OPEN:
        return world.gripper_open
    if goal.kind == AT_HOME:
        return pose_reached(world.gripper_pose, spec.metadata[spec.home_label], params)
    if goal.kind == ON:
        assert goal.obj is not None and goal.support is not None
        if world.grasped == goal.obj:
            return False
        top, bottom = world.object_poses[goal.obj], world.object_poses[goal.support]
        gt, gb = world.geometry[goal.obj], world.geometry[goal.support]
        gap = (top.z - gt.height / 2) - (bottom.z + gb.height / 2)
        return _hdist(top, bottom) <= params.on_radius and abs(gap) <= params.contact_tol
    if goal.kind == AT_LABEL_POSE:
        assert goal.obj is not None and goal.pose is not None and goal.tolerance is not None
        if world.grasped == goal.obj:
            return False
        return _hdist(world.object_poses[goal.obj], goal.pose) <= goal.tolerance
    raise ValueError(goal.kind)


# --------------------------------------------------------------------------- run


@dataclass
class ExecutionResult:
    final_status: Verdict
    ticks_used: int
    goals_met: list[bool]
    trace: list[tuple[int, str, str, str]]
    world: WorldState
    metadata: dict[str, Pose]
    root_status: Status | None = None
    error: str | None = None

    @property
    def success(self) -> bool:
        return self.final_status is Verdict.SUCCESS

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.final_status]

    def trace_jsonl(self) -> str:
        return "".join(
            json.dumps({"tick": t, "path": p, "node": n, "status": s}, separators=(",", ":")) + "\n"
            for t, p, n, s in self.trace
        )

    def summary(self) -> dict:
        out = {
            "status": self.final_status.value,
            "root_status": None if self.root_status is None else self.root_status.value,
            "ticks_used": self.ticks_used,
            "goals_met": self.goals_met,
            "grasped": self.world.grasped,
            "gripper_open": self.world.gripper_open,
            "object_poses": {k: p.to_json() for k, p in sorted(self.world.object_poses.items())},
        }
        if self.error:
            out["error"] = self.error
        return out


def run(bt: BTNode, scene: Scene, spec: SystemSpecification, goals: Sequence[GoalPredicate],
        params: SimParams | None = None, perturbations: Sequence[Perturbation] = (),
        record_trace: bool = True) -> ExecutionResult:
    """Execute ``bt`` until the root terminates or ``max_ticks`` elapse.

    Works on a private copy of ``spec`` so callers can re-run a sample. The
    verdict is Success only when the root succeeds and every goal holds.
    """
    params = params or SimParams()
    spec = spec.copy()
    world = initial_world(scene, spec)
    _update_contact(world, spec, params)
    mem = TickMemory(params=params, record=record_trace)
    pending = sorted(perturbations, key=lambda p: p.at_tick)
    goals = list(goals)
    for t in range(params.max_ticks):
        world.tick_index = t
        while pending and pending[0].at_tick <= t:
            world = apply_perturbation(world, pending.pop(0), spec, params)
        mem.begin(t)
        try:
            status = tick(bt, world, spec, mem)
        except (UnknownPrimitive, UnknownLabel) as exc:
            return ExecutionResult(Verdict.FAILURE, t + 1, [False] * len(goals), mem.trace,
                                   world, spec.metadata, None, str(exc))
        if status is not Status.RUNNING:
            met = [goal_holds(g, world, spec, params) for g in goals]
            ok = status is Status.SUCCESS and all(met)
            return ExecutionResult(Verdict.SUCCESS if ok else Verdict.FAILURE, t + 1, met,
                                   mem.trace, world, spec.metadata, status)
        try:
            world = step_primitives(world, mem.commands, spec, params)
        except (UnknownPrimitive, UnknownLabel) as exc:
            return ExecutionResult(Verdict.FAILURE, t + 1, [False] * len(goals), mem.trace,
                                   world, spec.metadata, status, str(exc))
        world.tick_index = t + 1
    met = [goal_holds(g, world, spec, params) for g in goals]
    return ExecutionResult(Verdict.TIMEOUT, params.max_ticks, met, mem.trace, world,
                           spec.metadata, Status.RUNNING)
