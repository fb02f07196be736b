from __future__ import annotations

import random
from pathlib import Path

import pytest
from hypothesis import strategies as st

from btforge.model import ArgExpr, BTNode, NodeKind, Pose, gripper_spec
from btforge.oracle import build_dataset

DATA = Path(__file__).resolve().parents[1] / "data"
COMPOSITE_KINDS = (NodeKind.SEQUENCE, NodeKind.SELECTOR, NodeKind.PARALLEL)
ACTION_NAMES = ("MovePose", "OpenGripper", "CloseGripper", "MoveDown")
CONDITION_NAMES = ("is_at_pose", "is_grasped", "is_contact", "is_at_home")
LABELS = ("home", "temp_pose", "object_metadata")


def random_leaf(rng: random.Random) -> BTNode:
    if rng.random() < 0.5:
        kind, name = NodeKind.ACTION, rng.choice(ACTION_NAMES)
    else:
        kind, name = NodeKind.CONDITION, rng.choice(CONDITION_NAMES)
    args: tuple[ArgExpr, ...] = ()
    if name in ("MovePose", "is_at_pose"):
        dz = rng.choice([None, 0.1, 0.05, round(rng.uniform(0.001, 0.3), 4)])
        args = (ArgExpr(rng.choice(LABELS), dz),)
    return BTNode(kind, name=name, args=args)


def random_tree(rng: random.Random, max_depth: int = 8, max_branch: int = 5,
                depth: int = 1) -> BTNode:
    """Seeded random tree; root counts as depth 1."""
    stop = depth >= max_depth or (depth > 1 and rng.random() < 0.15 + 0.1 * depth)
    if stop:
        return random_leaf(rng)
    kind = rng.choice(COMPOSITE_KINDS)
    n = rng.randint(1, max_branch)
    return BTNode(kind, tuple(random_tree(rng, max_depth, max_branch, depth + 1) for _ in range(n)))


@st.composite
def bt_trees(draw, max_depth: int = 5) -> BTNode:
    seed = draw(st.integers(0, 2**32 - 1))
    depth = draw(st.integers(1, max_depth))
    return random_tree(random.Random(seed), max_depth=depth, max_branch=4)


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def poses(draw) -> Pose:
    q = [draw(st.floats(-1, 1, allow_nan=False)) for _ in range(4)]
    if sum(c * c for c in q) < 1e-6:
        q = [1.0, 0.0, 0.0, 0.0]
    return Pose(draw(finite), draw(finite), draw(finite), *q)


@pytest.fixture(scope="session")
def spec():
    return gripper_spec({"object_metadata": Pose(0.5, 0.1, 0.025)})


@pytest.fixture(scope="session")
def small_dataset():
    return build_dataset(40, 11)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
