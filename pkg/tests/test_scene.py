import itertools
import json
import math
import re
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btforge.scene import (
    COLORS,
    SHAPES,
    PlacementExhausted,
    Scene,
    SceneConfig,
    footprint_radius,
    generate_scene,
    parse_object_id,
    render_schematic,
    scene_metadata,
    view_transform,
)


def check_geometry(scene: Scene, cfg: SceneConfig) -> None:
    x0, x1, y0, y1 = cfg.table_bounds
    spots = [(o.pose.x, o.pose.y, o.radius) for o in scene.objects]
    spots.append((scene.temp_pose.x, scene.temp_pose.y, cfg.temp_radius))
    for x, y, r in spots:
        assert x0 <= x - r and x + r <= x1 and y0 <= y - r and y + r <= y1
    for (xa, ya, ra), (xb, yb, rb) in itertools.combinations(spots, 2):
        assert math.hypot(xa - xb, ya - yb) >= cfg.min_separation + ra + rb
    for o in scene.objects:
        for name, value in o.dims.items():
            lo, hi = cfg.dimension_ranges[o.shape][name]
            assert lo <= value <= hi
        assert o.pose.z == pytest.approx(cfg.table_height + o.height / 2, abs=1e-12)
        assert -math.pi - 1e-9 <= o.yaw <= math.pi + 1e-9


def test_geometric_soundness_many_seeds():
    cfg = SceneConfig()
    for seed in range(1000):
        scene = generate_scene(seed, cfg)
        assert cfg.n_objects[0] <= len(scene.objects) <= cfg.n_objects[1]
        check_geometry(scene, cfg)


def test_deterministic_and_seed_sensitive():
    a, b = generate_scene(123), generate_scene(123)
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())
    assert generate_scene(124).to_json() != a.to_json()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**64 - 1))
def test_json_round_trip(seed):
    scene = generate_scene(seed)
    again = Scene.from_json(json.loads(json.dumps(scene.to_json())))
    assert again.to_json() == scene.to_json()


def test_ids_follow_naming_and_are_unique():
    for seed in range(200):
        scene = generate_scene(seed, SceneConfig(n_objects=(6, 8), color_set=("red", "blue")))
        ids = [o.id for o in scene.objects]
        assert len(set(ids)) == len(ids)
        per_type = Counter()
        for o in scene.objects:
            color, shape, idx = parse_object_id(o.id)
            assert (color, shape) == (o.color, o.shape)
            assert idx == per_type[(color, shape)]
            per_type[(color, shape)] += 1


def test_parse_object_id_rejects():
    with pytest.raises(ValueError):
        parse_object_id("Red-cube")


def test_metadata_has_every_object_plus_waypoints():
    scene = generate_scene(9, SceneConfig(n_objects=(4, 4)))
    md = scene_metadata(scene)
    assert len(md) == 4 + 2
    assert md["home"] == scene.home_pose and md["temp_pose"] == scene.temp_pose


def test_coordinates_rounded_to_tenth_mm():
    scene = generate_scene(77)
    for o in scene.objects:
        for v in (o.pose.x, o.pose.y, *o.dims.values()):
            assert round(v, 4) == v


def test_placement_exhausted():
    crowded = SceneConfig(n_objects=(40, 40), table_bounds=(0.0, 0.2, 0.0, 0.2), max_attempts=2000)
    with pytest.raises(PlacementExhausted):
        generate_scene(1, crowded)
    tiny = SceneConfig(table_bounds=(0.0, 0.05, 0.0, 0.05))
    with pytest.raises(PlacementExhausted):
        generate_scene(1, tiny)


def test_config_validation():
    with pytest.raises(ValueError):
        SceneConfig(n_objects=(3, 2))
    with pytest.raises(ValueError):
        SceneConfig(shape_set=("sphere",))
    with pytest.raises(ValueError):
        SceneConfig(table_bounds=(1, 0, 0, 1))
    cfg = SceneConfig.from_json({"n_objects": [1, 1], "dimension_ranges": {"cube": {"side": [0.04, 0.04]}}})
    assert cfg.n_objects == (1, 1) and cfg.dimension_ranges["cube"]["side"] == (0.04, 0.04)
    assert SceneConfig.from_json(json.loads(json.dumps(SceneConfig().to_json()))) == SceneConfig()


def test_shape_and_color_coverage():
    shapes, colors = Counter(), Counter()
    for seed in range(300):
        for o in generate_scene(seed).objects:
            shapes[o.shape] += 1
            colors[o.color] += 1
    assert set(shapes) == set(SHAPES) and set(colors) == set(COLORS)


def test_footprint_radius():
    assert footprint_radius("cylinder", {"radius": 0.02, "height": 0.05}) == 0.02
    assert footprint_radius("cube", {"side": 0.04}) == pytest.approx(math.hypot(0.02, 0.02))


# ---------------------------------------------------------------- rendering


def test_render_orientation_convention():
    scene = generate_scene(31, SceneConfig(n_objects=(5, 5)))
    svg = render_schematic(scene)
    centers = {m.group(1): (float(m.group(2)), float(m.group(3)))
               for m in re.finditer(r'data-id="([^"]+)" data-cx="([-\d.]+)" data-cy="([-\d.]+)"', svg)}
    assert set(centers) == {o.id for o in scene.objects}
    for a, b in itertools.combinations(scene.objects, 2):
        ua, va = centers[a.id]
        ub, vb = centers[b.id]
        # smaller world x is further left, larger world y is further up
        assert (a.pose.x < b.pose.x) == (ua < ub)
        assert (a.pose.y > b.pose.y) == (va < vb)


def test_view_transform_inverse():
    vt = view_transform(generate_scene(1))
    for x, y in [(0.2, -0.4), (0.8, 0.4), (0.51, 0.03)]:
        u, v = vt.to_image(x, y)
        assert vt.to_world(u, v) == pytest.approx((x, y), abs=1e-12)


def test_empty_scene_renders_table_only():
    scene = generate_scene(4, SceneConfig(n_objects=(0, 0)))
    svg = render_schematic(scene)
    assert '<rect id="table"' in svg
    assert "data-id" not in svg and "<polygon" not in svg and "<circle" not in svg
