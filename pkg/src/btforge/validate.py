"""Static rule checks over lowered Behavior Trees.

Five rule families feed the schema-compliance signal: flat hierarchy, reactive
guarding, spatial offsetting, vocabulary and metadata grounding. Each checker
returns a list of :class:`Violation`; :func:`validate` aggregates them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .model import BTNode, NodeKind, SystemSpecification

FLAT_HIERARCHY = "flat_hierarchy"
GUARDING = "reactive_guarding"
OFFSET = "spatial_offset"
VOCABULARY = "vocabulary"
GROUNDING = "grounding"

RULES = (FLAT_HIERARCHY, GUARDING, OFFSET, VOCABULARY, GROUNDING)
GUARD_KINDS = (NodeKind.SELECTOR, NodeKind.PARALLEL)
MOTION_ACTIONS = frozenset({"MovePose"})


@dataclass(frozen=True)
class Violation:
    rule: str
    path: str
    message: str
    node: str = ""  # kind for composites, primitive name for leaves

    def to_json(self) -> dict:
        return {"rule": self.rule, "path": self.path, "message": self.message}


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    # offset findings demoted by lenient mode; they never affect compliance
    warnings: list[Violation] = field(default_factory=list)

    def _ok(self, rule: str) -> bool:
        return not any(v.rule == rule for v in self.violations)

    @property
    def flat_hierarchy_ok(self) -> bool:
        return self._ok(FLAT_HIERARCHY)

    @property
    def guarding_ok(self) -> bool:
        return self._ok(GUARDING)

    @property
    def offset_ok(self) -> bool:
        return self._ok(OFFSET)

    @property
    def vocabulary_ok(self) -> bool:
        return self._ok(VOCABULARY)

    @property
    def grounding_ok(self) -> bool:
        return self._ok(GROUNDING)

    def schema_compliant(self) -> bool:
        return (self.flat_hierarchy_ok and self.guarding_ok and self.offset_ok
                and self.vocabulary_ok and self.grounding_ok)

    def to_json(self) -> dict:
        return {
            "compliant": self.schema_compliant(),
            "flat_hierarchy_ok": self.flat_hierarchy_ok,
            "guarding_ok": self.guarding_ok,
            "offset_ok": self.offset_ok,
            "vocabulary_ok": self.vocabulary_ok,
            "grounding_ok": self.grounding_ok,
            "violations": [v.to_json() for v in self.violations],
            "warnings": [v.to_json() for v in self.warnings],
        }

    def jsonl(self) -> str:
        return "".join(json.dumps(v.to_json()) + "\n" for v in self.violations)


def check_flat_hierarchy(bt: BTNode) -> list[Violation]:
    out = []
    for path, node in bt.walk():
        for i, child in enumerate(node.children):
            if child.kind is node.kind:
                out.append(Violation(FLAT_HIERARCHY, f"{path}.children[{i}]",
                                     f"{child.kind.value} nested directly in {node.kind.value}",
                                     child.kind.value))
    return out


def _is_guard(node: BTNode) -> bool:
    return node.kind in GUARD_KINDS and any(c.kind is NodeKind.CONDITION for c in node.children)


def check_reactive_guarding(bt: BTNode) -> list[Violation]:
    out: list[Violation] = []

    def visit(node: BTNode, path: str, guarded: bool) -> None:
        if node.kind is NodeKind.ACTION:
            if not guarded:
                out.append(Violation(GUARDING, path,
                                     f"action {node.name} has no Selector/Parallel ancestor "
                                     "with a Condition child", node.name or ""))
            return
        g = guarded or _is_guard(node)
        for i, child in enumerate(node.children):
            visit(child, f"{path}.children[{i}]", g)

    visit(bt, "$", False)
    return out


def check_offset_rule(bt: BTNode, spec: SystemSpecification,
                      motion_actions: Iterable[str] = MOTION_ACTIONS) -> list[Violation]:
    """Direct approaches to an object label need an earlier offset approach.

    Leaves are visited in document order; home and temp waypoints are exempt.
    """
    motion = set(motion_actions)
    waypoints = {spec.home_label, spec.temp_label}
    offset_seen: set[str] = set()
    out = []
    for path, leaf in bt.leaves():
        if leaf.kind is not NodeKind.ACTION or leaf.name not in motion:
            continue
        for arg in leaf.args:
            label = arg.base_label
            if label in waypoints or label not in spec.metadata:
                continue
            if arg.dz is not None:
                offset_seen.add(label)
            elif label not in offset_seen:
                out.append(Violation(OFFSET, path,
                                     f"{leaf.name}({label}) approaches the object directly "
                                     "without a prior offset pose", leaf.name or ""))
    return out


def check_vocabulary_and_grounding(bt: BTNode, spec: SystemSpecification) -> list[Violation]:
    out = []
    for path, leaf in bt.leaves():
        table = spec.actions if leaf.kind is NodeKind.ACTION else spec.conditions
        what = leaf.kind.value.lower()
        if leaf.name not in table:
            out.append(Violation(VOCABULARY, path,
                                 f"{what} {leaf.name!r} is not in the node library", leaf.name or ""))
        elif len(leaf.args) != table[leaf.name]:
            out.append(Violation(VOCABULARY, path,
                                 f"{leaf.name} expects {table[leaf.name]} argument(s), "
                                 f"got {len(leaf.args)}", leaf.name or ""))
        for arg in leaf.args:
            if arg.base_label not in spec.metadata:
                out.append(Violation(GROUNDING, path,
                                     f"label {arg.base_label!r} is not in the metadata",
                                     leaf.name or ""))
    return out


def validate(bt: BTNode, spec: SystemSpecification, strict_offset: bool = False) -> ValidationReport:
    """Run every rule checker.

    Offset findings count as violations only with ``strict_offset``; otherwise
    they are reported as warnings (the lenient mode used for external corpora).
    """
    report = ValidationReport()
    report.violations += check_flat_hierarchy(bt)
    report.violations += check_reactive_guarding(bt)
    offsets = check_offset_rule(bt, spec)
    if strict_offset:
        report.violations += offsets
    else:
        report.warnings += offsets
    report.violations += check_vocabulary_and_grounding(bt, spec)
    return report
