import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btforge.model import (
    ArgExpr,
    BTNode,
    JsonError,
    KeyErrorReport,
    NodeKind,
    Pose,
    SystemSpecification,
    UnknownLabel,
    action,
    condition,
    format_decimal,
    gripper_spec,
    loads_bt,
    lower,
    parse_document,
    resolve_arg,
    selector,
    sequence,
    serialize_minified,
    to_raw,
)

from conftest import DATA, bt_trees, poses, random_tree


def key_errors(raw, spec=None):
    with pytest.raises(KeyErrorReport) as info:
        lower(raw, spec)
    return info.value.entries


# ---------------------------------------------------------------- documents


def test_grasp_example_lowers(spec):
    bt = lower(parse_document((DATA / "grasp_example.json").read_text()), spec)
    assert bt.kind is NodeKind.SELECTOR
    assert [c.label for c in bt.children] == ["is_grasped", "Sequence"]
    move, close = bt.children[1].children
    assert move.name == "MovePose" and move.args == (ArgExpr("object_metadata"),)
    assert close.name == "CloseGripper" and close.args == ()


def test_minified_key_order_and_no_nulls():
    bt = sequence(action("MovePose", "home+z=0.1"), condition("is_grasped"))
    text = serialize_minified(bt)
    assert text == ('{"type":"Sequence","children":[{"type":"Action","name":"MovePose",'
                    '"args":["home+z=0.1"]},{"type":"Condition","name":"is_grasped"}]}')
    assert "null" not in text and " " not in text


@settings(max_examples=300, deadline=None)
@given(bt_trees())
def test_serialize_round_trip(bt):
    text = serialize_minified(bt)
    assert lower(parse_document(text)) == bt
    assert serialize_minified(lower(parse_document(text))) == text


def test_round_trip_seeded_sweep():
    rng = random.Random(3)
    for _ in range(2000):
        bt = random_tree(rng)
        assert loads_bt(serialize_minified(bt)) == bt


@pytest.mark.parametrize("text", ['{"type":', "[1,", "", "{'type': 'Action'}", '{"a": NaN}',
                                  '{"a": Infinity}'])
def test_invalid_json_is_json_error(text):
    with pytest.raises(JsonError):
        parse_document(text)


def test_non_utf8_bytes():
    with pytest.raises(JsonError):
        parse_document(b"\xff\xfe{}")


# ---------------------------------------------------------------- key errors


def test_name_on_composite_is_key_error():
    raw = {"type": "Sequence", "name": "phase", "children": [{"type": "Action", "name": "OpenGripper"}]}
    [e] = key_errors(raw)
    assert (e.path, e.key) == ("$", "name")


def test_missing_type_and_children_reported_together():
    raw = {"type": "Selector", "children": [{"name": "is_grasped"}, {"type": "Sequence"}]}
    entries = key_errors(raw)
    assert {(e.path, e.key) for e in entries} == {("$.children[0]", "type"), ("$.children[1]", "children")}


@pytest.mark.parametrize("raw,key", [
    ({"type": "Action"}, "name"),
    ({"type": "Action", "name": ""}, "name"),
    ({"type": "Action", "name": "MovePose", "args": "home"}, "args"),
    ({"type": "Action", "name": "MovePose", "args": [3]}, "args"),
    ({"type": "Action", "name": "MovePose", "args": ["home+z=-0.1"]}, "args"),
    ({"type": "Action", "name": "MovePose", "args": ["home+z=0"]}, "args"),
    ({"type": "Action", "name": "OpenGripper", "children": []}, "children"),
    ({"type": "Action", "name": "OpenGripper", "extra": 1}, "extra"),
    ({"type": "Parallel", "children": []}, "children"),
    ({"type": "Parallel", "children": {}}, "children"),
    ({"type": "Loop", "children": []}, "type"),
    ({"type": "Sequence", "children": [{"type": "Action", "name": "OpenGripper"}],
      "args": ["home"]}, "args"),
])
def test_schema_problems(raw, key):
    assert key in {e.key for e in key_errors(raw)}


def test_non_object_node():
    assert key_errors({"type": "Sequence", "children": [5]})[0].path == "$.children[0]"


def test_null_keys_are_absent():
    raw = {"type": "Action", "name": "OpenGripper", "args": None}
    assert lower(raw) == action("OpenGripper")
    raw = {"type": "Sequence", "name": None, "children": [{"type": "Action", "name": "OpenGripper"}]}
    assert lower(raw) == sequence(action("OpenGripper"))


def test_arity_checked_against_spec(spec):
    assert key_errors({"type": "Action", "name": "MovePose"}, spec)[0].key == "args"
    assert key_errors({"type": "Condition", "name": "is_grasped", "args": ["home"]}, spec)
    # undeclared names are the validator's business
    assert lower({"type": "Action", "name": "Wave", "args": ["a", "b"]}, spec).name == "Wave"


# ---------------------------------------------------------------- arg expressions


@pytest.mark.parametrize("text,label,dz", [
    ("home", "home", None), ("red_cube_0+z=0.1", "red_cube_0", 0.1),
    ("A9+z=12", "A9", 12.0), ("x+z=0.0001", "x", 0.0001),
])
def test_argexpr_parse(text, label, dz):
    e = ArgExpr.parse(text)
    assert (e.base_label, e.dz) == (label, dz)


@pytest.mark.parametrize("text", ["", "a b", "a+z=", "a+z=.5", "a+z=1e-3", "a+y=1", "a-z=1", "+z=1"])
def test_argexpr_rejects(text):
    with pytest.raises(ValueError):
        ArgExpr.parse(text)


@given(st.floats(min_value=1e-9, max_value=1e6, allow_nan=False, allow_infinity=False))
def test_argexpr_render_round_trip(dz):
    e = ArgExpr("obj", dz)
    text = e.render()
    digits = text.split("+z=")[1]
    assert "e" not in digits
    assert "." not in digits or not digits.endswith(("0", "."))
    assert ArgExpr.parse(text) == e


def test_format_decimal():
    assert format_decimal(0.1) == "0.1"
    assert format_decimal(2.0) == "2"
    assert format_decimal(1e-7) == "0.0000001"


@settings(max_examples=500)
@given(poses(), st.floats(min_value=1e-6, max_value=1.0, allow_nan=False))
def test_resolve_arg_exact(pose, dz):
    spec = gripper_spec({"obj": pose})
    out = resolve_arg(ArgExpr("obj", dz), spec)
    assert out.z == pose.z + dz
    assert (out.x, out.y) == (pose.x, pose.y)
    assert out.quat == pose.quat
    assert resolve_arg(ArgExpr("obj"), spec) == pose


def test_resolve_arg_unknown_label(spec):
    with pytest.raises(UnknownLabel):
        resolve_arg(ArgExpr("ghost"), spec)


def test_resolve_arg_reads_live_metadata(spec):
    s = spec.copy()
    s.metadata["object_metadata"] = Pose(0.1, 0.2, 0.3)
    assert resolve_arg(ArgExpr("object_metadata", 0.1), s).z == 0.3 + 0.1


# ---------------------------------------------------------------- poses and spec


def test_pose_normalizes_and_rejects_nan():
    p = Pose(0, 0, 0, 2, 0, 0, 0)
    assert p.quat == (1.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        Pose(math.nan, 0, 0)
    with pytest.raises(ValueError):
        Pose(0, 0, 0, 0, 0, 0, 0)


def test_spec_json_round_trip(spec):
    again = SystemSpecification.from_json(json.loads(json.dumps(spec.to_json())))
    assert again.to_json() == spec.to_json()


def test_spec_file_matches_builtin_vocabulary():
    s = SystemSpecification.from_json(json.loads((DATA / "gripper_spec.json").read_text()))
    assert s.actions == {"MovePose": 1, "OpenGripper": 0, "CloseGripper": 0, "MoveDown": 0}
    assert s.conditions == {"is_at_pose": 1, "is_grasped": 0, "is_contact": 0, "is_at_home": 0}
    assert {"home", "temp_pose", "object_metadata"} <= set(s.metadata)


def test_btnode_invariants():
    with pytest.raises(ValueError):
        BTNode(NodeKind.SEQUENCE)
    with pytest.raises(ValueError):
        BTNode(NodeKind.ACTION, name="")
    with pytest.raises(ValueError):
        BTNode(NodeKind.SELECTOR, (action("OpenGripper"),), name="x")


def test_walk_paths():
    bt = selector(condition("is_grasped"), sequence(action("OpenGripper")))
    assert [p for p, _ in bt.walk()] == ["$", "$.children[0]", "$.children[1]", "$.children[1].children[0]"]
    assert to_raw(bt)["children"][1]["children"][0]["name"] == "OpenGripper"
