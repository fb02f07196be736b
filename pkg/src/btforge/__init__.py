"""Behavior-Tree policy toolkit: JSON-BT codec, static validation, seeded
tabletop scenes, a rule-based ground-truth oracle, a kinematic tick engine and
an evaluation harness."""

from .model import (
    ArgExpr,
    BTNode,
    JsonError,
    KeyErrorReport,
    NodeKind,
    Pose,
    SystemSpecification,
    UnknownLabel,
    gripper_spec,
    lower,
    parse_document,
    resolve_arg,
    serialize_minified,
)

__version__ = "0.1.0"

__all__ = [
    "ArgExpr",
    "BTNode",
    "JsonError",
    "KeyErrorReport",
    "NodeKind",
    "Pose",
    "SystemSpecification",
    "UnknownLabel",
    "gripper_spec",
    "lower",
    "parse_document",
    "resolve_arg",
    "serialize_minified",
]
