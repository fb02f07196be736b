"""Seeded, domain-randomized tabletop scenes and their schematic renders."""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping
from xml.sax.saxutils import escape

import numpy as np

from .model import Pose

SHAPES = ("prism", "parallelepiped", "cylinder", "cube")
COLORS = ("red", "green", "blue", "yellow", "pink", "orange", "purple", "white")
ID_RE = re.compile(r"(?P<color>[a-z]+)_(?P<shape>[a-z]+)_(?P<index>\d+)")

SVG_FILL = {"red": "#d62728", "green": "#2ca02c", "blue": "#1f77b4", "yellow": "#f0d000",
            "pink": "#ff8fc7", "orange": "#ff7f0e", "purple": "#9467bd", "white": "#f4f4f4"}


class PlacementExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    n_objects: tuple[int, int] = (2, 6)
    table_bounds: tuple[float, float, float, float] = (0.2, 0.8, -0.4, 0.4)
    table_height: float = 0.0
    shape_set: tuple[str, ...] = SHAPES
    color_set: tuple[str, ...] = COLORS
    min_separation: float = 0.03
    # per shape: dimension name -> (min, max) in meters
    dimension_ranges: Mapping[str, Mapping[str, tuple[float, float]]] = field(default_factory=lambda: {
        "prism": {"width": (0.03, 0.05), "depth": (0.03, 0.05), "height": (0.03, 0.06)},
        "parallelepiped": {"width": (0.03, 0.05), "depth": (0.03, 0.05), "height": (0.04, 0.08)},
        "cylinder": {"radius": (0.015, 0.025), "height": (0.04, 0.08)},
        "cube": {"side": (0.03, 0.05)},
    })
    home: tuple[float, float, float] = (0.3, 0.0, 0.4)
    temp_radius: float = 0.05
    max_attempts: int = 10_000

    def __post_init__(self) -> None:
        lo, hi = self.n_objects
        if not 0 <= lo <= hi:
            raise ValueError(f"bad n_objects range {self.n_objects}")
        x0, x1, y0, y1 = self.table_bounds
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"bad table bounds {self.table_bounds}")
        if not self.min_separation > 0:
            raise ValueError("min_separation must be > 0")
        if not self.shape_set or not self.color_set:
            raise ValueError("shape_set and color_set must be non-empty")
        for shape in self.shape_set:
            if shape not in SHAPES:
                raise ValueError(f"unknown shape {shape!r}")
            for name, (a, b) in self.dimension_ranges[shape].items():
                if not 0 < a <= b:
                    raise ValueError(f"bad range for {shape}.{name}: {(a, b)}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["dimension_ranges"] = {s: {k: list(v) for k, v in r.items()}
                                 for s, r in self.dimension_ranges.items()}
        return d

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> SceneConfig:
        kw = dict(d)
        for key in ("n_objects", "table_bounds", "shape_set", "color_set", "home"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if "dimension_ranges" in kw:
            base = cls().dimension_ranges
            merged = {s: dict(r) for s, r in base.items()}
            for s, r in kw["dimension_ranges"].items():
                merged.setdefault(s, {}).update({k: tuple(v) for k, v in r.items()})
            kw["dimension_ranges"] = merged
        return cls(**kw)


def footprint_half_extents(shape: str, dims: Mapping[str, float]) -> tuple[float, float]:
    if shape == "cylinder":
        return dims["radius"], dims["radius"]
    if shape == "cube":
        return dims["side"] / 2, dims["side"] / 2
    return dims["width"] / 2, dims["depth"] / 2


def footprint_radius(shape: str, dims: Mapping[str, float]) -> float:
    """Radius of the circle circumscribing the footprint."""
    if shape == "cylinder":
        return dims["radius"]
    hx, hy = footprint_half_extents(shape, dims)
    return math.hypot(hx, hy)


def object_height(shape: str, dims: Mapping[str, float]) -> float:
    return dims["side"] if shape == "cube" else dims["height"]


@dataclass(frozen=True)
class SceneObject:
    id: str
    shape: str
    color: str
    dims: Mapping[str, float]
    pose: Pose

    @property
    def height(self) -> float:
        return object_height(self.shape, self.dims)

    @property
    def radius(self) -> float:
        return footprint_radius(self.shape, self.dims)

    @property
    def yaw(self) -> float:
        return 2.0 * math.atan2(self.pose.qz, self.pose.qw)

    def to_json(self) -> dict:
        return {"id": self.id, "shape": self.shape, "color": self.color,
                "dims": dict(self.dims), "pose": self.pose.to_json()}

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> SceneObject:
        return cls(d["id"], d["shape"], d["color"], dict(d["dims"]), Pose.from_json(d["pose"]))


def parse_object_id(obj_id: str) -> tuple[str, str, int]:
    m = ID_RE.fullmatch(obj_id)
    if m is None:
        raise ValueError(f"bad object id {obj_id!r}")
    return m.group("color"), m.group("shape"), int(m.group("index"))


@dataclass(frozen=True)
class Scene:
    seed: int
    objects: tuple[SceneObject, ...]
    home_pose: Pose
    temp_pose: Pose
    table_height: float
    table_bounds: tuple[float, float, float, float]

    def object(self, obj_id: str) -> SceneObject:
        for o in self.objects:
            if o.id == obj_id:
                return o
        raise KeyError(obj_id)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "table": {"bounds": list(self.table_bounds), "height": self.table_height},
            "objects": [o.to_json() for o in self.objects],
            "home_pose": self.home_pose.to_json(),
            "temp_pose": self.temp_pose.to_json(),
        }

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> Scene:
        return cls(
            seed=int(d["seed"]),
            objects=tuple(SceneObject.from_json(o) for o in d["objects"]),
            home_pose=Pose.from_json(d["home_pose"]),
            temp_pose=Pose.from_json(d["temp_pose"]),
            table_height=float(d["table"]["height"]),
            table_bounds=tuple(d["table"]["bounds"]),  # type: ignore[arg-type]
        )


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    # rounded to 0.1 mm so serialized scenes stay short and exactly reproducible
    return round(float(rng.uniform(lo, hi)), 4)


def generate_scene(seed: int, cfg: SceneConfig | None = None) -> Scene:
    """Draw objects and a free temp waypoint by rejection sampling.

    Deterministic in ``(seed, cfg)``; raises :class:`PlacementExhausted` when
    ``cfg.max_attempts`` placement draws do not yield a valid layout.
    """
    cfg = cfg or SceneConfig()
    seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = cfg.table_bounds
    n = int(rng.integers(cfg.n_objects[0], cfg.n_objects[1] + 1))

    specs = []
    for _ in range(n):
        shape = cfg.shape_set[int(rng.integers(len(cfg.shape_set)))]
        color = cfg.color_set[int(rng.integers(len(cfg.color_set)))]
        dims = {k: _uniform(rng, a, b) for k, (a, b) in cfg.dimension_ranges[shape].items()}
        specs.append((shape, color, dims))

    placed: list[tuple[float, float, float]] = []  # x, y, footprint radius
    attempts = 0

    def draw_free(radius: float) -> tuple[float, float]:
        nonlocal attempts
        if x1 - x0 < 2 * radius or y1 - y0 < 2 * radius:
            raise PlacementExhausted(f"footprint radius {radius} does not fit the table")
        while True:
            attempts += 1
            if attempts > cfg.max_attempts:
                raise PlacementExhausted(
                    f"no valid layout for {n} objects within {cfg.max_attempts} attempts")
            x = _uniform(rng, x0 + radius, x1 - radius)
            y = _uniform(rng, y0 + radius, y1 - radius)
            if (x - radius < x0 or x + radius > x1 or y - radius < y0 or y + radius > y1):
                continue
            if all(math.hypot(x - px, y - py) >= cfg.min_separation + radius + pr
                   for px, py, pr in placed):
                return x, y

    tx, ty = draw_free(cfg.temp_radius)
    placed.append((tx, ty, cfg.temp_radius))

    counters: dict[tuple[str, str], int] = {}
    objects = []
    for shape, color, dims in specs:
        r = footprint_radius(shape, dims)
        x, y = draw_free(r)
        placed.append((x, y, r))
        yaw = _uniform(rng, -math.pi, math.pi)
        idx = counters.get((color, shape), 0)
        counters[(color, shape)] = idx + 1
        z = cfg.table_height + object_height(shape, dims) / 2
        objects.append(SceneObject(f"{color}_{shape}_{idx}", shape, color, dims,
                                   Pose.from_yaw(x, y, z, yaw)))

    hx, hy, hz = cfg.home
    return Scene(
        seed=seed,
        objects=tuple(objects),
        home_pose=Pose(hx, hy, cfg.table_height + hz),
        temp_pose=Pose(tx, ty, cfg.table_height),
        table_height=cfg.table_height,
        table_bounds=tuple(cfg.table_bounds),  # type: ignore[arg-type]
    )


def scene_metadata(scene: Scene, home_label: str = "home",
                   temp_label: str = "temp_pose") -> dict[str, Pose]:
    md = {o.id: o.pose for o in scene.objects}
    md[home_label] = scene.home_pose
    md[temp_label] = scene.temp_pose
    return md


# --------------------------------------------------------------------------- render


@dataclass(frozen=True)
class ViewTransform:
    """World xy -> image pixels; image left is smaller x, image top is larger y."""

    x_min: float
    y_max: float
    scale: float
    margin: float

    def to_image(self, x: float, y: float) -> tuple[float, float]:
        return (self.margin + (x - self.x_min) * self.scale,
                self.margin + (self.y_max - y) * self.scale)

    def to_world(self, u: float, v: float) -> tuple[float, float]:
        return (self.x_min + (u - self.margin) / self.scale,
                self.y_max - (v - self.margin) / self.scale)


def view_transform(scene: Scene, scale: float = 800.0, margin: float = 20.0) -> ViewTransform:
    x0, _, _, y1 = scene.table_bounds
    return ViewTransform(x0, y1, scale, margin)


def _corners(obj: SceneObject) -> list[tuple[float, float]]:
    hx, hy = footprint_half_extents(obj.shape, obj.dims)
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    return [(obj.pose.x + c * dx - s * dy, obj.pose.y + s * dx + c * dy)
            for dx, dy in ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy))]


def render_schematic(scene: Scene, scale: float = 800.0, margin: float = 20.0) -> str:
    """Top-down orthographic SVG of the table and object footprints."""
    vt = view_transform(scene, scale, margin)
    x0, x1, y0, y1 = scene.table_bounds
    width = 2 * margin + (x1 - x0) * scale
    height = 2 * margin + (y1 - y0) * scale
    tu, tv = vt.to_image(x0, y1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1f}" height="{height:.1f}" '
        f'viewBox="0 0 {width:.1f} {height:.1f}">',
        f'<rect id="table" x="{tu:.2f}" y="{tv:.2f}" width="{(x1 - x0) * scale:.2f}" '
        f'height="{(y1 - y0) * scale:.2f}" fill="#c8a878" stroke="#6b4f2a"/>',
    ]
    for obj in scene.objects:
        fill = SVG_FILL.get(obj.color, "#888888")
        cu, cv = vt.to_image(obj.pose.x, obj.pose.y)
        attrs = f'data-id="{escape(obj.id)}" data-cx="{cu:.3f}" data-cy="{cv:.3f}" fill="{fill}" stroke="#222"'
        if obj.shape == "cylinder":
            parts.append(f'<circle {attrs} cx="{cu:.3f}" cy="{cv:.3f}" r="{obj.dims["radius"] * scale:.3f}"/>')
        else:
            pts = " ".join(f"{u:.3f},{v:.3f}" for u, v in (vt.to_image(*p) for p in _corners(obj)))
            parts.append(f'<polygon {attrs} points="{pts}"/>')
            if obj.shape == "prism":
                # ridge line along the long footprint axis
                a, b, c, d = _corners(obj)
                m1 = vt.to_image((a[0] + d[0]) / 2, (a[1] + d[1]) / 2)
                m2 = vt.to_image((b[0] + c[0]) / 2, (b[1] + c[1]) / 2)
                parts.append(f'<line x1="{m1[0]:.3f}" y1="{m1[1]:.3f}" x2="{m2[0]:.3f}" '
                             f'y2="{m2[1]:.3f}" stroke="#222"/>')
        parts.append(f'<text x="{cu:.3f}" y="{cv - obj.radius * scale - 3:.3f}" font-size="10" '
                     f'text-anchor="middle">{escape(obj.id)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
