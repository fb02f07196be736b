"""Behavior-Tree domain types and the JSON-BT codec.

Parsing is two-staged: :func:`parse_document` only checks JSON well-formedness,
:func:`lower` turns the raw tree into typed :class:`BTNode` values and collects
every schema problem it finds into a :class:`KeyErrorReport`.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from typing import Any, Iterator, Mapping, Sequence

RawNode = Any

LABEL_RE = re.compile(r"[A-Za-z0-9_]+")
ARG_RE = re.compile(r"(?P<label>[A-Za-z0-9_]+)(?:\+z=(?P<dz>[0-9]+(?:\.[0-9]+)?))?")


class JsonError(ValueError):
    def __init__(self, position: int, message: str):
        super().__init__(f"invalid JSON at offset {position}: {message}")
        self.position = position
        self.message = message


class UnknownLabel(LookupError):
    def __init__(self, label: str):
        super().__init__(f"unknown metadata label {label!r}")
        self.label = label


@dataclass(frozen=True)
class KeyErrorEntry:
    path: str
    key: str
    reason: str

    def to_json(self) -> dict:
        return {"path": self.path, "key": self.key, "reason": self.reason}


class KeyErrorReport(ValueError):
    """Raised by :func:`lower`; ``entries`` lists every schema problem found."""

    def __init__(self, entries: Sequence[KeyErrorEntry]):
        self.entries = list(entries)
        summary = "; ".join(f"{e.path}: {e.key} ({e.reason})" for e in self.entries[:5])
        super().__init__(f"{len(self.entries)} key error(s): {summary}")


# --------------------------------------------------------------------------- poses


@dataclass(frozen=True)
class Pose:
    """Position in meters plus a unit quaternion (w, x, y, z)."""

    x: float
    y: float
    z: float
    qw: float = 1.0
    qx: float = 0.0
    qy: float = 0.0
    qz: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.x, self.y, self.z, self.qw, self.qx, self.qy, self.qz)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite pose component in {vals}")
        norm = math.sqrt(self.qw**2 + self.qx**2 + self.qy**2 + self.qz**2)
        if norm == 0.0:
            raise ValueError("zero quaternion")
        # re-normalizing an already-unit quaternion must be a no-op so that
        # serialized scenes stay byte-stable across load/save cycles
        if abs(norm - 1.0) > 1e-12:
            for name in ("qw", "qx", "qy", "qz"):
                object.__setattr__(self, name, float(getattr(self, name)) / norm)
        for name in ("x", "y", "z", "qw", "qx", "qy", "qz"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    @property
    def quat(self) -> tuple[float, float, float, float]:
        return (self.qw, self.qx, self.qy, self.qz)

    def with_position(self, x: float, y: float, z: float) -> Pose:
        return Pose(x, y, z, self.qw, self.qx, self.qy, self.qz)

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z,
                "qw": self.qw, "qx": self.qx, "qy": self.qy, "qz": self.qz}

    @classmethod
    def from_json(cls, d: Mapping[str, float]) -> Pose:
        return cls(d["x"], d["y"], d["z"], d.get("qw", 1.0), d.get("qx", 0.0),
                   d.get("qy", 0.0), d.get("qz", 0.0))

    @classmethod
    def from_yaw(cls, x: float, y: float, z: float, yaw: float) -> Pose:
        return cls(x, y, z, math.cos(yaw / 2.0), 0.0, 0.0, math.sin(yaw / 2.0))


def quat_mul(a: Sequence[float], b: Sequence[float]) -> tuple[float, float, float, float]:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conj(q: Sequence[float]) -> tuple[float, float, float, float]:
    return (q[0], -q[1], -q[2], -q[3])


def quat_rotate(q: Sequence[float], v: Sequence[float]) -> tuple[float, float, float]:
    _, x, y, z = quat_mul(quat_mul(q, (0.0, v[0], v[1], v[2])), quat_conj(q))
    return (x, y, z)


def quat_angle(a: Sequence[float], b: Sequence[float]) -> float:
    """Smallest rotation angle (radians) taking ``a`` to ``b``."""
    dot = abs(sum(p * q for p, q in zip(a, b)))
    return 2.0 * math.acos(min(1.0, dot))


def quat_slerp(a: Sequence[float], b: Sequence[float], t: float) -> tuple[float, float, float, float]:
    dot = sum(p * q for p, q in zip(a, b))
    if dot < 0.0:
        b = tuple(-q for q in b)
        dot = -dot
    if dot > 0.9995:
        out = [p + t * (q - p) for p, q in zip(a, b)]
    else:
        theta = math.acos(dot)
        s = math.sin(theta)
        wa = math.sin((1.0 - t) * theta) / s
        wb = math.sin(t * theta) / s
        out = [wa * p + wb * q for p, q in zip(a, b)]
    n = math.sqrt(sum(c * c for c in out))
    return tuple(c / n for c in out)  # type: ignore[return-value]


# --------------------------------------------------------------------------- tree


class NodeKind(str, Enum):
    SEQUENCE = "Sequence"
    SELECTOR = "Selector"
    PARALLEL = "Parallel"
    ACTION = "Action"
    CONDITION = "Condition"

    @property
    def is_composite(self) -> bool:
        return self in COMPOSITES


COMPOSITES = frozenset({NodeKind.SEQUENCE, NodeKind.SELECTOR, NodeKind.PARALLEL})
LEAVES = frozenset({NodeKind.ACTION, NodeKind.CONDITION})


def format_decimal(value: float) -> str:
    """Shortest round-tripping fixed-point rendering, no trailing zeros."""
    text = format(Decimal(repr(float(value))), "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text


@dataclass(frozen=True)
class ArgExpr:
    base_label: str
    dz: float | None = None

    def __post_init__(self) -> None:
        if not self.base_label or not LABEL_RE.fullmatch(self.base_label):
            raise ValueError(f"bad label {self.base_label!r}")
        if self.dz is not None:
            if not (math.isfinite(self.dz) and self.dz > 0.0):
                raise ValueError(f"z offset must be finite and > 0, got {self.dz!r}")
            object.__setattr__(self, "dz", float(self.dz))

    @classmethod
    def parse(cls, text: str) -> ArgExpr:
        m = ARG_RE.fullmatch(text)
        if m is None:
            raise ValueError(f"bad argument expression {text!r}")
        dz = m.group("dz")
        return cls(m.group("label"), None if dz is None else float(dz))

    def render(self) -> str:
        if self.dz is None:
            return self.base_label
        return f"{self.base_label}+z={format_decimal(self.dz)}"

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class BTNode:
    kind: NodeKind
    children: tuple[BTNode, ...] = ()
    name: str | None = None
    args: tuple[ArgExpr, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NodeKind(self.kind))
        object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "args", tuple(self.args))
        if self.kind.is_composite:
            if not self.children:
                raise ValueError(f"{self.kind.value} needs at least one child")
            if self.name is not None or self.args:
                raise ValueError("composite nodes carry no name and no args")
        else:
            if self.children:
                raise ValueError("leaf nodes have no children")
            if not self.name:
                raise ValueError("leaf nodes need a non-empty name")

    @property
    def is_composite(self) -> bool:
        return self.kind.is_composite

    @property
    def label(self) -> str:
        return self.name if self.name is not None else self.kind.value

    def walk(self, path: str = "$") -> Iterator[tuple[str, BTNode]]:
        """Pre-order traversal yielding (json-path, node)."""
        yield path, self
        for i, child in enumerate(self.children):
            yield from child.walk(f"{path}.children[{i}]")

    def leaves(self) -> list[tuple[str, BTNode]]:
        return [(p, n) for p, n in self.walk() if not n.is_composite]

    def __str__(self) -> str:
        if self.is_composite:
            return f"{self.kind.value}[{', '.join(str(c) for c in self.children)}]"
        if self.args:
            return f"{self.kind.value}({self.name}, [{', '.join(a.render() for a in self.args)}])"
        return f"{self.kind.value}({self.name})"


def _args(args: Sequence[ArgExpr | str]) -> tuple[ArgExpr, ...]:
    return tuple(a if isinstance(a, ArgExpr) else ArgExpr.parse(a) for a in args)


def sequence(*children: BTNode) -> BTNode:
    return BTNode(NodeKind.SEQUENCE, children)


def selector(*children: BTNode) -> BTNode:
    return BTNode(NodeKind.SELECTOR, children)


def parallel(*children: BTNode) -> BTNode:
    return BTNode(NodeKind.PARALLEL, children)


def action(name: str, *args: ArgExpr | str) -> BTNode:
    return BTNode(NodeKind.ACTION, name=name, args=_args(args))


def condition(name: str, *args: ArgExpr | str) -> BTNode:
    return BTNode(NodeKind.CONDITION, name=name, args=_args(args))


def follow_path(raw: RawNode, path: str) -> RawNode:
    """Resolve a ``$.children[i]...`` path against a raw JSON tree."""
    node = raw
    for idx in re.findall(r"\.children\[(\d+)\]", path):
        node = node["children"][int(idx)]
    return node


# --------------------------------------------------------------------------- spec

GRIPPER_ACTIONS = {"MovePose": 1, "OpenGripper": 0, "CloseGripper": 0, "MoveDown": 0}
GRIPPER_CONDITIONS = {"is_at_pose": 1, "is_grasped": 0, "is_contact": 0, "is_at_home": 0}


@dataclass
class SystemSpecification:
    """Primitive vocabulary with arities, dynamic metadata and safety parameters."""

    actions: dict[str, int]
    conditions: dict[str, int]
    metadata: dict[str, Pose]
    home_label: str = "home"
    temp_label: str = "temp_pose"
    z_offset_default: float = 0.10
    table_height: float = 0.0

    def __post_init__(self) -> None:
        for label in (self.home_label, self.temp_label):
            if label not in self.metadata:
                raise ValueError(f"metadata must define {label!r}")
        if not self.z_offset_default > 0.0:
            raise ValueError("z_offset_default must be > 0")
        clash = set(self.actions) & set(self.conditions)
        if clash:
            raise ValueError(f"names declared as both action and condition: {sorted(clash)}")
        for arity in list(self.actions.values()) + list(self.conditions.values()):
            if arity not in (0, 1):
                raise ValueError(f"arity must be 0 or 1, got {arity}")

    @property
    def object_labels(self) -> list[str]:
        return [k for k in self.metadata if k not in (self.home_label, self.temp_label)]

    def copy(self) -> SystemSpecification:
        return SystemSpecification(dict(self.actions), dict(self.conditions), dict(self.metadata),
                                   self.home_label, self.temp_label, self.z_offset_default,
                                   self.table_height)

    def to_json(self) -> dict:
        return {
            "actions": dict(self.actions),
            "conditions": dict(self.conditions),
            "metadata": {k: p.to_json() for k, p in self.metadata.items()},
            "home_label": self.home_label,
            "temp_label": self.temp_label,
            "z_offset_default": self.z_offset_default,
            "table_height": self.table_height,
        }

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> SystemSpecification:
        return cls(
            actions={str(k): int(v) for k, v in d["actions"].items()},
            conditions={str(k): int(v) for k, v in d["conditions"].items()},
            metadata={k: Pose.from_json(v) for k, v in d["metadata"].items()},
            home_label=d.get("home_label", "home"),
            temp_label=d.get("temp_label", "temp_pose"),
            z_offset_default=float(d.get("z_offset_default", 0.10)),
            table_height=float(d.get("table_height", 0.0)),
        )


def gripper_spec(metadata: Mapping[str, Pose] | None = None, **kwargs: Any) -> SystemSpecification:
    """Specification over the gripper primitive library (MovePose ... is_at_home)."""
    md = dict(metadata or {})
    md.setdefault(kwargs.get("home_label", "home"), Pose(0.3, 0.0, 0.4))
    md.setdefault(kwargs.get("temp_label", "temp_pose"), Pose(0.5, -0.3, 0.0))
    return SystemSpecification(dict(GRIPPER_ACTIONS), dict(GRIPPER_CONDITIONS), md, **kwargs)


def resolve_arg(expr: ArgExpr, spec: SystemSpecification) -> Pose:
    """Look the label up in the live metadata and apply the vertical offset."""
    try:
        base = spec.metadata[expr.base_label]
    except KeyError:
        raise UnknownLabel(expr.base_label) from None
    if expr.dz is None:
        return base
    return Pose(base.x, base.y, base.z + expr.dz, base.qw, base.qx, base.qy, base.qz)


# --------------------------------------------------------------------------- codec


def _reject_constant(name: str) -> None:
    raise ValueError(f"{name} is not valid JSON")


def parse_document(text: str | bytes) -> RawNode:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise JsonError(exc.start, "not UTF-8") from None
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise JsonError(exc.pos, exc.msg) from None
    except ValueError as exc:
        raise JsonError(0, str(exc)) from None


def strip_nulls(raw: RawNode) -> RawNode:
    """Recursively drop object keys whose value is null."""
    if isinstance(raw, dict):
        return {k: strip_nulls(v) for k, v in raw.items() if v is not None}
    if isinstance(raw, list):
        return [strip_nulls(v) for v in raw]
    return raw


_COMPOSITE_KEYS = {"type", "children"}
_LEAF_KEYS = {"type", "name", "args"}


def lower(raw: RawNode, spec: SystemSpecification | None = None) -> BTNode:
    """Turn a raw JSON tree into a :class:`BTNode`.

    Null-valued keys are treated as absent. With a ``spec``, leaves whose name
    is declared get their argument count checked against the declared arity;
    undeclared names are left for the validator.
    """
    errors: list[KeyErrorEntry] = []
    node = _lower(strip_nulls(raw), "$", spec, errors)
    if errors or node is None:
        raise KeyErrorReport(errors or [KeyErrorEntry("$", "type", "unlowerable node")])
    return node


def _lower(raw: RawNode, path: str, spec: SystemSpecification | None,
           errors: list[KeyErrorEntry]) -> BTNode | None:
    if not isinstance(raw, dict):
        errors.append(KeyErrorEntry(path, "type", "node is not a JSON object"))
        return None
    if "type" not in raw:
        errors.append(KeyErrorEntry(path, "type", "missing mandatory key"))
        # still descend so nested problems are reported too
        kids = raw.get("children")
        if isinstance(kids, list):
            for i, child in enumerate(kids):
                _lower(child, f"{path}.children[{i}]", spec, errors)
        return None
    try:
        kind = NodeKind(raw["type"])
    except (ValueError, TypeError):
        errors.append(KeyErrorEntry(path, "type", f"unknown node type {raw['type']!r}"))
        return None

    n_before = len(errors)
    if kind.is_composite:
        for key in raw:
            if key not in _COMPOSITE_KEYS:
                errors.append(KeyErrorEntry(path, key, "forbidden key on composite"))
        kids = raw.get("children")
        if "children" not in raw:
            errors.append(KeyErrorEntry(path, "children", "missing mandatory key"))
            return None
        if not isinstance(kids, list):
            errors.append(KeyErrorEntry(path, "children", "must be an array"))
            return None
        if not kids:
            errors.append(KeyErrorEntry(path, "children", "composite needs at least one child"))
            return None
        lowered = [_lower(c, f"{path}.children[{i}]", spec, errors) for i, c in enumerate(kids)]
        if len(errors) > n_before:
            return None
        return BTNode(kind, tuple(lowered))  # type: ignore[arg-type]

    for key in raw:
        if key not in _LEAF_KEYS:
            reason = "forbidden key on leaf" if key == "children" else "unexpected key"
            errors.append(KeyErrorEntry(path, key, reason))
    name = raw.get("name")
    if "name" not in raw:
        errors.append(KeyErrorEntry(path, "name", "missing mandatory key"))
    elif not isinstance(name, str) or not name:
        errors.append(KeyErrorEntry(path, "name", "must be a non-empty string"))
    args: list[ArgExpr] = []
    raw_args = raw.get("args", [])
    if not isinstance(raw_args, list):
        errors.append(KeyErrorEntry(path, "args", "must be an array"))
    else:
        for j, text in enumerate(raw_args):
            if not isinstance(text, str):
                errors.append(KeyErrorEntry(f"{path}.args[{j}]", "args", "argument must be a string"))
                continue
            try:
                args.append(ArgExpr.parse(text))
            except ValueError as exc:
                errors.append(KeyErrorEntry(f"{path}.args[{j}]", "args", str(exc)))
    if spec is not None and isinstance(name, str) and len(errors) == n_before:
        table = spec.actions if kind is NodeKind.ACTION else spec.conditions
        if name in table and len(args) != table[name]:
            errors.append(KeyErrorEntry(path, "args",
                                        f"{name} takes {table[name]} argument(s), got {len(args)}"))
    if len(errors) > n_before:
        return None
    return BTNode(kind, name=name, args=tuple(args))


def to_raw(bt: BTNode) -> dict:
    if bt.is_composite:
        return {"type": bt.kind.value, "children": [to_raw(c) for c in bt.children]}
    out: dict[str, Any] = {"type": bt.kind.value, "name": bt.name}
    if bt.args:
        out["args"] = [a.render() for a in bt.args]
    return out


def dumps_min(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def serialize_minified(bt: BTNode) -> str:
    return dumps_min(to_raw(bt))


def loads_bt(text: str, spec: SystemSpecification | None = None) -> BTNode:
    return lower(parse_document(text), spec)
