"""Rule-based ground truth: instruction, Behavior Tree and goals for a scene.

Every transport of an object ``L`` to a target ``T`` expands to::

    Selector[is_grasped, Sequence[approach L+d, descend L, CloseGripper]]
    Parallel[is_at_pose L+d, MovePose L+d]                 # lift
    Parallel[is_at_pose T+d, MovePose T+d]                 # transfer
    Selector[is_grasped, Sequence[...]]                    # re-grasp if dropped
    Parallel[is_at_pose T+d, MovePose T+d]                 # no-op unless re-grasped
    Parallel[is_at_pose T+2d, Sequence[descend, OpenGripper, retreat T+2d]]

with every motion written as ``Parallel[is_at_pose p, MovePose p]``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from . import goals as G
from .goals import GoalPredicate
from .model import (
    ArgExpr,
    BTNode,
    SystemSpecification,
    action,
    condition,
    dumps_min,
    gripper_spec,
    loads_bt,
    parallel,
    selector,
    sequence,
    to_raw,
)
from .scene import Scene, SceneConfig, SceneObject, generate_scene, scene_metadata
from .validate import validate

TASK_KINDS = ("pick", "lift", "place_on", "stack_on", "move_to_temp", "stack_all_color", "swap")
SINGLE_OBJECT_KINDS = ("pick", "lift", "move_to_temp")
ORIGIN_SUFFIX = "_origin"


class InfeasibleScene(ValueError):
    pass


class InfeasibleTask(ValueError):
    pass


class DatasetBuildError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"sample {index}: {cause}")
        self.index = index
        self.cause = cause


@dataclass(frozen=True)
class OracleConfig:
    # None means uniform over TASK_KINDS
    kind_weights: Mapping[str, float] | None = None
    z_offset: float | None = None  # defaults to spec.z_offset_default
    descend_mode: str = "pose"  # "pose" | "movedown"
    place_clearance: float = 0.005
    goal_tolerance: float = 0.005
    max_scene_attempts: int = 200

    def weights(self) -> dict[str, float]:
        w = dict(self.kind_weights) if self.kind_weights else {k: 1.0 for k in TASK_KINDS}
        unknown = set(w) - set(TASK_KINDS)
        if unknown:
            raise ValueError(f"unknown task kinds {sorted(unknown)}")
        total = sum(w.values())
        if total <= 0:
            raise ValueError("task weights must sum to a positive value")
        return {k: w.get(k, 0.0) / total for k in TASK_KINDS}

    def to_json(self) -> dict:
        return {"kind_weights": None if self.kind_weights is None else dict(self.kind_weights),
                "z_offset": self.z_offset, "descend_mode": self.descend_mode,
                "place_clearance": self.place_clearance, "goal_tolerance": self.goal_tolerance,
                "max_scene_attempts": self.max_scene_attempts}

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> OracleConfig:
        return cls(**d)


@dataclass(frozen=True)
class TaskInstance:
    kind: str
    referents: tuple[str, ...]
    instruction: str
    seed: int

    def __post_init__(self) -> None:
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == "swap" and len(self.referents) != 2:
            raise ValueError("swap takes exactly two referents")
        if self.kind == "stack_all_color" and len(self.referents) < 2:
            raise ValueError("stack_all_color needs at least two referents")

    def to_json(self) -> dict:
        return {"kind": self.kind, "referents": list(self.referents),
                "instruction": self.instruction, "seed": self.seed}

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> TaskInstance:
        return cls(d["kind"], tuple(d["referents"]), d["instruction"], int(d["seed"]))


@dataclass
class DatasetSample:
    index: int
    seed: int
    scene: Scene
    spec: SystemSpecification
    task: TaskInstance
    target_bt: BTNode
    goals: list[GoalPredicate] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "id": self.index,
            "seed": self.seed,
            "instruction": self.task.instruction,
            "task": {"kind": self.task.kind, "referents": list(self.task.referents)},
            "scene": self.scene.to_json(),
            "spec": self.spec.to_json(),
            "bt": to_raw(self.target_bt),
            "goals": [g.to_json() for g in self.goals],
        }

    def to_jsonl(self) -> str:
        return dumps_min(self.to_json()) + "\n"

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> DatasetSample:
        spec = SystemSpecification.from_json(d["spec"])
        instr = d["instruction"]
        task = TaskInstance(d["task"]["kind"], tuple(d["task"]["referents"]), instr, int(d["seed"]))
        return cls(
            index=int(d["id"]),
            seed=int(d["seed"]),
            scene=Scene.from_json(d["scene"]),
            spec=spec,
            task=task,
            target_bt=loads_bt(json.dumps(d["bt"]), spec),
            goals=[GoalPredicate.from_json(g) for g in d["goals"]],
        )


# --------------------------------------------------------------------------- seeds


def derive_seed(master_seed: int, *parts: Any) -> int:
    """Stable 64-bit seed from a master seed and a path of identifiers."""
    text = ":".join(str(p) for p in (master_seed, *parts))
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big")


# --------------------------------------------------------------------------- language

TEMPLATES: dict[str, tuple[str, ...]] = {
    "pick": (
        "Pick up {a}.",
        "Grab {a}.",
        "Take {a}.",
        "Get {a} for me.",
        "Please pick up {a}.",
        "Grasp {a} and bring it back.",
        "Can you fetch {a}?",
        "Collect {a} from the table.",
    ),
    "lift": (
        "Lift {a}.",
        "Raise {a} off the table.",
        "Pick {a} up and hold it high.",
        "Lift {a} into the air.",
        "Please lift {a}.",
        "Hold {a} above the table.",
        "Elevate {a}.",
        "Grab {a} and lift it up.",
    ),
    "place_on": (
        "Place {a} on {b}.",
        "Put {a} on top of {b}.",
        "Set {a} onto {b}.",
        "Move {a} onto {b}.",
        "Please put {a} on {b}.",
        "Take {a} and place it on {b}.",
        "Rest {a} on {b}.",
        "Drop {a} onto {b}.",
    ),
    "stack_on": (
        "Stack {a} on {b}.",
        "Stack {a} on top of {b}.",
        "Build a stack with {a} on {b}.",
        "Pile {a} onto {b}.",
        "Please stack {a} on {b}.",
        "Put {a} on {b} to make a stack.",
        "Make a tower: {a} on {b}.",
        "Stack {a} above {b}.",
    ),
    "move_to_temp": (
        "Move {a} to the free spot.",
        "Put {a} in the buffer area.",
        "Clear {a} to the temporary position.",
        "Place {a} at the spare location.",
        "Move {a} out of the way.",
        "Set {a} down in the empty area.",
        "Please park {a} at the temporary pose.",
        "Relocate {a} to the free area.",
    ),
    "stack_all_color": (
        "Stack all the {color} objects.",
        "Put all {color} objects in one stack.",
        "Make a tower of every {color} piece.",
        "Stack every {color} object on top of each other.",
        "Pile up all the {color} items.",
        "Gather the {color} objects into a single stack.",
        "Please stack all {color} objects.",
        "Build one stack from all the {color} objects.",
    ),
    "swap": (
        "Switch the positions of {a} and {b}.",
        "Swap {a} and {b}.",
        "Exchange the places of {a} and {b}.",
        "Swap the positions of {a} and {b}.",
        "Put {a} where {b} is and {b} where {a} is.",
        "Trade places between {a} and {b}.",
        "Please switch {a} with {b}.",
        "Interchange {a} and {b}.",
    ),
}

# template used for swap when both referents share one shape (e.g. two cylinders)
SAME_SHAPE_SWAP = ("Switch the positions of the two {shape}s.", "Swap the two {shape}s.")

TIE_EPS = 1e-6


def describe(obj: SceneObject, scene: Scene, rng: np.random.Generator) -> str | None:
    """Unambiguous referring expression, or None when none exists.

    Deictic forms resolve left/right by world x (smaller x is left) among
    objects of the same shape and are only used when that extreme is unique.
    """
    options = []
    same_cs = [o for o in scene.objects if o.shape == obj.shape and o.color == obj.color]
    if len(same_cs) == 1:
        options.append(f"the {obj.color} {obj.shape}")
    same_shape = [o for o in scene.objects if o.shape == obj.shape]
    if len(same_shape) == 1:
        options.append(f"the {obj.shape}")
    elif len(same_shape) >= 2:
        xs = sorted(o.pose.x for o in same_shape)
        if obj.pose.x == xs[0] and xs[1] - xs[0] > TIE_EPS:
            options.append(f"the left {obj.shape}" if len(same_shape) == 2 else f"the leftmost {obj.shape}")
        if obj.pose.x == xs[-1] and xs[-1] - xs[-2] > TIE_EPS:
            options.append(f"the right {obj.shape}" if len(same_shape) == 2 else f"the rightmost {obj.shape}")
    if not options:
        return None
    return options[int(rng.integers(len(options)))]


def resolve_deictic(scene: Scene, shape: str, side: str) -> SceneObject:
    """Resolve 'the left/right <shape>' with the smaller/larger-x convention."""
    cands = [o for o in scene.objects if o.shape == shape]
    if len(cands) < 2:
        raise ValueError(f"deictic reference needs >= 2 {shape}s")
    pick = min if side in ("left", "leftmost") else max
    return pick(cands, key=lambda o: o.pose.x)


def _color_groups(scene: Scene) -> dict[str, list[SceneObject]]:
    groups: dict[str, list[SceneObject]] = {}
    for o in scene.objects:
        groups.setdefault(o.color, []).append(o)
    return {c: g for c, g in groups.items() if len(g) >= 2}


def feasible_kinds(scene: Scene) -> list[str]:
    describable = [o for o in scene.objects if _has_description(o, scene)]
    kinds = []
    if describable:
        kinds += ["pick", "lift", "move_to_temp"]
    if len(describable) >= 2:
        kinds += ["place_on", "stack_on", "swap"]
    if _color_groups(scene):
        kinds.append("stack_all_color")
    return [k for k in TASK_KINDS if k in kinds]


def _has_description(obj: SceneObject, scene: Scene) -> bool:
    return describe(obj, scene, np.random.default_rng(0)) is not None


def sample_task(seed: int, scene: Scene, kind: str | None = None,
                cfg: OracleConfig | None = None) -> TaskInstance:
    """Draw a task feasible in ``scene``; deterministic in ``(seed, scene)``."""
    cfg = cfg or OracleConfig()
    rng = np.random.default_rng(derive_seed(seed, "task"))
    kinds = feasible_kinds(scene)
    if not kinds:
        raise InfeasibleScene("no task kind is feasible for this scene")
    if kind is None:
        weights = cfg.weights()
        w = np.array([weights[k] for k in kinds], dtype=float)
        if w.sum() <= 0:
            raise InfeasibleScene("all feasible task kinds have zero weight")
        kind = kinds[int(rng.choice(len(kinds), p=w / w.sum()))]
    elif kind not in kinds:
        raise InfeasibleScene(f"task kind {kind!r} is not feasible for this scene")

    templates = TEMPLATES[kind]
    if kind == "stack_all_color":
        groups = _color_groups(scene)
        color = sorted(groups)[int(rng.integers(len(groups)))]
        members = list(groups[color])
        order = rng.permutation(len(members))
        referents = tuple(members[i].id for i in order)
        text = templates[int(rng.integers(len(templates)))].format(color=color)
        return TaskInstance(kind, referents, text, seed)

    pool = [o for o in scene.objects if _has_description(o, scene)]
    n_ref = 1 if kind in SINGLE_OBJECT_KINDS else 2
    idx = rng.choice(len(pool), size=n_ref, replace=False)
    chosen = [pool[int(i)] for i in idx]
    names = [describe(o, scene, rng) for o in chosen]
    if (kind == "swap" and chosen[0].shape == chosen[1].shape
            and sum(o.shape == chosen[0].shape for o in scene.objects) == 2 and rng.random() < 0.5):
        text = SAME_SHAPE_SWAP[int(rng.integers(len(SAME_SHAPE_SWAP)))].format(shape=chosen[0].shape)
    else:
        template = templates[int(rng.integers(len(templates)))]
        text = template.format(a=names[0], b=names[1] if n_ref == 2 else "")
    text = text[0].upper() + text[1:]
    return TaskInstance(kind, tuple(o.id for o in chosen), text, seed)


# --------------------------------------------------------------------------- trees


def _move(label: str, dz: float | None = None) -> BTNode:
    arg = ArgExpr(label, dz)
    return parallel(condition("is_at_pose", arg), action("MovePose", arg))


def _dz(value: float) -> float:
    # 0.1 mm grid keeps rendered offsets short; never rounds to zero
    return max(round(value, 4), 0.0001)


class _Planner:
    def __init__(self, scene: Scene, spec: SystemSpecification, cfg: OracleConfig):
        self.scene = scene
        self.spec = spec
        self.cfg = cfg
        self.delta = cfg.z_offset if cfg.z_offset is not None else spec.z_offset_default
        if not self.delta > 0:
            raise InfeasibleTask("z offset must be positive")
        self.height = {o.id: o.height for o in scene.objects}

    def _descend(self, label: str, dz: float | None) -> BTNode:
        if self.cfg.descend_mode == "movedown":
            return parallel(condition("is_contact"), action("MoveDown"))
        return _move(label, dz)

    def grasp(self, obj: str) -> BTNode:
        return selector(
            condition("is_grasped"),
            sequence(_move(obj, self.delta), self._descend(obj, None), action("CloseGripper")),
        )

    def _place_offset(self, obj: str, target: str, onto_object: bool) -> float:
        c = self.cfg.place_clearance
        if onto_object:
            return _dz(self.height[target] / 2 + self.height[obj] / 2 + c)
        label_z = self.spec.metadata[target].z
        return _dz(self.spec.table_height + self.height[obj] / 2 + c - label_z)

    def transport(self, obj: str, target: str, onto_object: bool) -> list[BTNode]:
        d = self.delta
        place = self._place_offset(obj, target, onto_object)
        release = parallel(
            condition("is_at_pose", ArgExpr(target, 2 * d)),
            sequence(self._descend(target, place), action("OpenGripper"), _move(target, 2 * d)),
        )
        return [
            self.grasp(obj),
            _move(obj, d),
            _move(target, d),
            self.grasp(obj),
            _move(target, d),
            release,
        ]

    def home(self) -> BTNode:
        home = self.spec.home_label
        return parallel(condition("is_at_home"), action("MovePose", ArgExpr(home)))


def synthesize_bt(task: TaskInstance, scene: Scene, spec: SystemSpecification,
                  cfg: OracleConfig | None = None) -> BTNode:
    cfg = cfg or OracleConfig()
    for ref in task.referents:
        if ref not in spec.metadata:
            raise InfeasibleTask(f"referent {ref!r} is not in the metadata")
    p = _Planner(scene, spec, cfg)
    refs = task.referents
    d = p.delta
    steps: list[BTNode]
    if task.kind == "pick":
        steps = [p.grasp(refs[0]), _move(refs[0], d), p.home()]
    elif task.kind == "lift":
        steps = [p.grasp(refs[0]), _move(refs[0], 2 * d)]
    elif task.kind in ("place_on", "stack_on"):
        steps = p.transport(refs[0], refs[1], onto_object=True) + [p.home()]
    elif task.kind == "move_to_temp":
        steps = p.transport(refs[0], spec.temp_label, onto_object=False) + [p.home()]
    elif task.kind == "stack_all_color":
        steps = []
        for below, above in zip(refs, refs[1:]):
            steps += p.transport(above, below, onto_object=True)
        steps.append(p.home())
    elif task.kind == "swap":
        a, b = refs
        a0, b0 = a + ORIGIN_SUFFIX, b + ORIGIN_SUFFIX
        if a0 not in spec.metadata or b0 not in spec.metadata:
            raise InfeasibleTask("swap needs origin snapshot labels in the metadata")
        steps = (p.transport(a, spec.temp_label, onto_object=False)
                 + p.transport(b, a0, onto_object=False)
                 + p.transport(a, b0, onto_object=False)
                 + [p.home()])
    else:
        raise InfeasibleTask(task.kind)
    return sequence(*steps)


def goal_of(task: TaskInstance, scene: Scene, spec: SystemSpecification | None = None,
            tolerance: float = 0.005) -> list[GoalPredicate]:
    refs = task.referents
    if task.kind in ("pick", "lift"):
        return [G.grasped(refs[0])]
    if task.kind in ("place_on", "stack_on"):
        return [G.on(refs[0], refs[1]), G.gripper_open()]
    if task.kind == "move_to_temp":
        temp_label = spec.temp_label if spec else "temp_pose"
        temp = spec.metadata[temp_label] if spec else scene.temp_pose
        return [G.at_label_pose(refs[0], temp_label, temp, tolerance)]
    if task.kind == "stack_all_color":
        return [G.on(above, below) for below, above in zip(refs, refs[1:])] + [G.gripper_open()]
    if task.kind == "swap":
        a, b = refs
        pa, pb = scene.object(a).pose, scene.object(b).pose
        return [G.at_label_pose(a, b + ORIGIN_SUFFIX, pb, tolerance),
                G.at_label_pose(b, a + ORIGIN_SUFFIX, pa, tolerance)]
    raise InfeasibleTask(task.kind)


def spec_for(scene: Scene, task: TaskInstance | None = None) -> SystemSpecification:
    """Gripper-library specification whose metadata mirrors the scene.

    Swap tasks additionally get ``<id>_origin`` snapshot labels so the tree can
    refer to the vacated original poses.
    """
    md = scene_metadata(scene)
    if task is not None and task.kind == "swap":
        for ref in task.referents:
            md[ref + ORIGIN_SUFFIX] = scene.object(ref).pose
    return gripper_spec(md, table_height=scene.table_height)


def make_sample(index: int, seed: int, scene_cfg: SceneConfig, cfg: OracleConfig,
                kind: str | None = None) -> DatasetSample:
    """Pair a scene with a task of ``kind``, re-rolling the scene until feasible."""
    for attempt in range(cfg.max_scene_attempts):
        scene = generate_scene(derive_seed(seed, "scene", attempt), scene_cfg)
        if kind is None or kind in feasible_kinds(scene):
            break
    else:
        raise InfeasibleScene(f"no scene supporting {kind!r} in {cfg.max_scene_attempts} attempts")
    task = sample_task(seed, scene, kind, cfg)
    spec = spec_for(scene, task)
    bt = synthesize_bt(task, scene, spec, cfg)
    report = validate(bt, spec, strict_offset=True)
    if not report.schema_compliant():
        raise InfeasibleTask(f"oracle tree failed validation: {report.violations}")
    goals = goal_of(task, scene, spec, cfg.goal_tolerance)
    return DatasetSample(index, seed, scene, spec, task, bt, goals)


def iter_dataset(n: int, master_seed: int, scene_cfg: SceneConfig | None = None,
                 cfg: OracleConfig | None = None) -> Iterator[DatasetSample]:
    if n < 1:
        raise ValueError("n must be >= 1")
    scene_cfg = scene_cfg or SceneConfig()
    cfg = cfg or OracleConfig()
    weights = cfg.weights()
    kinds = list(weights)
    p = np.array([weights[k] for k in kinds])
    for i in range(n):
        seed = derive_seed(master_seed, i)
        rng = np.random.default_rng(derive_seed(seed, "kind"))
        kind = kinds[int(rng.choice(len(kinds), p=p))]
        try:
            yield make_sample(i, seed, scene_cfg, cfg, kind)
        except Exception as exc:  # noqa: BLE001 - re-raised with the failing index
            raise DatasetBuildError(i, exc) from exc


def build_dataset(n: int, master_seed: int, scene_cfg: SceneConfig | None = None,
                  cfg: OracleConfig | None = None) -> list[DatasetSample]:
    return list(iter_dataset(n, master_seed, scene_cfg, cfg))


def write_dataset(samples: Sequence[DatasetSample] | Iterator[DatasetSample], fh) -> int:
    count = 0
    for s in samples:
        fh.write(s.to_jsonl())
        count += 1
    return count


def load_dataset(path) -> list[DatasetSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                out.append(DatasetSample.from_json(json.loads(line)))
            except Exception as exc:  # noqa: BLE001
                raise DatasetBuildError(lineno, exc) from exc
    return out

