"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run under pytest (lines are repeated in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import functools
import io
import math
import random
import sys
import tempfile
import time
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

from btforge.cli import main as cli_main  # noqa: E402
from btforge.harness import evaluate, mutate_corpus  # noqa: E402
from btforge.metrics import tree_metrics  # noqa: E402
from btforge.model import ArgExpr, Pose, loads_bt, resolve_arg, gripper_spec, to_raw  # noqa: E402
from btforge.oracle import TASK_KINDS, OracleConfig, build_dataset  # noqa: E402
from btforge.sim import SimParams, run  # noqa: E402
from btforge.studies import displacement_study, pick_place_samples, release_study  # noqa: E402
from btforge.validate import check_flat_hierarchy, validate  # noqa: E402

from conftest import DATA, random_tree  # noqa: E402
from test_metrics import stack_metrics  # noqa: E402
from test_oracle import release_targets  # noqa: E402
from test_validate import same_kind_pairs  # noqa: E402

RESULTS: list[str] = []


def criterion(number: int, title: str):
    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except AssertionError as exc:
                line = f"[FAIL] criterion {number:2d} {title}: {exc}"
                RESULTS.append(line)
                print(line)
                raise
            line = f"[PASS] criterion {number:2d} {title} ({time.perf_counter() - t0:.1f}s) {detail or ''}"
            RESULTS.append(line.rstrip())
            print(line.rstrip())
        return inner
    return wrap


def _candidates(records):
    return {str(r["id"]): r["bt"] for r in records}


@criterion(1, "grasp example conformance")
def test_grasp_example_conformance():
    t0 = time.perf_counter()
    spec = gripper_spec({"object_metadata": Pose(0.5, 0.1, 0.025)})
    bt = loads_bt((DATA / "grasp_example.json").read_text(), spec)
    report = validate(bt, spec)
    m = tree_metrics(bt)
    elapsed = time.perf_counter() - t0
    assert report.flat_hierarchy_ok, report.violations
    assert (m.depth, m.leaf_count, m.composite_count) == (3, 3, 2)
    assert m.node_density == 2 / 3
    assert elapsed < 1.0, f"{elapsed:.3f}s"
    return f"TD={m.depth} LC={m.leaf_count} ND={m.composite_count}/{m.leaf_count}"


@criterion(2, "flat-hierarchy checker equals pair enumeration")
def test_flat_hierarchy_equivalence():
    t0 = time.perf_counter()
    rng = random.Random(20240601)
    flagged = 0
    for _ in range(10_000):
        bt = random_tree(rng, max_depth=8, max_branch=5)
        got = {v.path for v in check_flat_hierarchy(bt)}
        want = same_kind_pairs(to_raw(bt))
        assert got == want, (got, want)
        flagged += bool(want)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0, f"{elapsed:.1f}s"
    return f"10000 trees, {flagged} with violations"


@criterion(3, "offset arithmetic is exact")
def test_offset_arithmetic():
    rng = random.Random(3)
    for _ in range(1000):
        q = [rng.uniform(-1, 1) for _ in range(4)]
        pose = Pose(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), *q)
        dz = rng.uniform(1e-4, 0.5)
        out = resolve_arg(ArgExpr("obj", dz), gripper_spec({"obj": pose}))
        assert out.z == pose.z + dz
        assert (out.x, out.y) == (pose.x, pose.y)
        assert out.quat == pose.quat
    return "1000 pairs, zero tolerance"


@criterion(4, "oracle closed-loop soundness")
def test_oracle_soundness():
    t0 = time.perf_counter()
    ds = build_dataset(500, 4)
    assert {s.task.kind for s in ds} == set(TASK_KINDS)
    r = evaluate(ds, "self").report
    elapsed = time.perf_counter() - t0
    assert (r.tsr, r.jvr, r.ker, r.sc) == (100.0, 100.0, 0.0, 100.0), r.row()
    assert elapsed < 300.0
    return f"TSR={r.tsr:.0f} JVR={r.jvr:.0f} KER={r.ker:.0f} SC={r.sc:.0f}"


@criterion(5, "reactivity under displacement")
def test_displacement():
    summary = displacement_study(pick_place_samples(100, 5))
    assert summary.success_rate == 100.0, summary.to_json()
    assert summary.mean_ticks > summary.baseline_mean_ticks, summary.to_json()
    return f"success {summary.success_rate:.0f}%, ticks {summary.mean_ticks:.2f} > {summary.baseline_mean_ticks:.2f}"


@criterion(6, "recovery after forced release; stale metadata fails")
def test_recovery():
    samples = pick_place_samples(100, 6)
    rel = release_study(samples)
    assert rel.success_rate == 100.0, rel.to_json()
    assert all(r.perturbed.ticks_used <= SimParams().max_ticks for r in rel.runs)
    # the guarded re-grasp branch closes the gripper again after the drop
    for r in rel.runs:
        closes = {p for _, p, n, _ in r.perturbed.trace if n == "CloseGripper"}
        assert closes == {"$.children[0].children[1].children[2]",
                          "$.children[3].children[1].children[2]"}, (r.sample_id, closes)
    stale = displacement_study(samples, params=SimParams(update_metadata=False))
    assert stale.success_rate < 100.0, stale.to_json()
    return f"release success {rel.success_rate:.0f}%, stale displacement success {stale.success_rate:.0f}%"


@criterion(7, "swap decomposition via temp buffer")
def test_swap():
    ds = build_dataset(100, 7, cfg=OracleConfig(kind_weights={"swap": 1.0}))
    eps = SimParams().pos_tol
    for s in ds:
        a, b = s.task.referents
        targets = release_targets(s.target_bt)
        assert len(targets) == 3 and targets[0] == s.spec.temp_label, targets
        assert targets.count(s.spec.temp_label) == 1
        result = run(s.target_bt, s.scene, s.spec, s.goals)
        assert result.success, s.index
        for obj, other in ((a, b), (b, a)):
            got, want = result.world.object_poses[obj], s.scene.object(other).pose
            assert math.hypot(got.x - want.x, got.y - want.y) <= eps, (s.index, obj)
    return "100/100 seeds"


@criterion(8, "mutation sensitivity")
def test_mutations():
    ds = build_dataset(100, 8)
    parts = []
    for rate in (0.1, 0.3, 0.5):
        kept = len(ds) - round(rate * len(ds))
        jvr = evaluate(ds, _candidates(mutate_corpus(ds, "truncate-json", rate, 1))).report.jvr
        assert jvr == 100.0 * kept / len(ds), (rate, jvr)
        ker = evaluate(ds, _candidates(mutate_corpus(ds, "drop-key", rate, 1, "type"))).report.ker
        assert abs(ker - 100 * rate) < 1e-9, (rate, ker)
        sc = evaluate(ds, _candidates(mutate_corpus(ds, "nest-same-kind", rate, 1))).report.sc
        assert abs(sc - 100 * (1 - rate)) < 1e-9, (rate, sc)
        parts.append(f"r={rate}: JVR={jvr:.0f} KER={ker:.0f} SC={sc:.0f}")
    sc_all = evaluate(ds, _candidates(mutate_corpus(ds, "nest-same-kind", 1.0, 1))).report.sc
    assert sc_all == 0.0, sc_all
    return "; ".join(parts) + "; nest r=1.0: SC=0"


@criterion(9, "determinism of generate and execute")
def test_determinism():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        a, b = d / "a.jsonl", d / "b.jsonl"
        for out in (a, b):
            assert cli_main(["generate", "--n", "1000", "--seed", "7", "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()
        t1, t2 = d / "t1.jsonl", d / "t2.jsonl"
        sink = io.StringIO()
        stdout, sys.stdout = sys.stdout, sink
        try:
            for t in (t1, t2):
                cli_main(["execute", "--dataset", str(a), "--id", "0", "--trace", str(t)])
        finally:
            sys.stdout = stdout
        assert t1.read_bytes() == t2.read_bytes() and t1.stat().st_size > 0
        return f"{a.stat().st_size} bytes dataset, {t1.stat().st_size} bytes trace"


@criterion(10, "tree metrics equal traversal oracle")
def test_metric_oracle():
    rng = random.Random(10)
    for _ in range(10_000):
        bt = random_tree(rng, max_depth=8, max_branch=5)
        m = tree_metrics(bt)
        assert (m.depth, m.leaf_count, m.composite_count) == stack_metrics(to_raw(bt))
    return "10000 trees, exact"


if __name__ == "__main__":
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
