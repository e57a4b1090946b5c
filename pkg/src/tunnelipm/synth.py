"""Synthetic tunnel scenes with exact ground truth.

A pinhole camera mounted above a flat road looks down the driving
direction. Vehicles are boxes on the road plane; their ground-truth boxes
are the image hulls of the eight projected box corners. Road-frame
coordinates: ``x`` across the road from the left edge, ``y`` along the
road from the ROI near edge, ``z`` up, all in meters.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import Annotation, BBox, DatasetManifest, ImageRecord, clamp_bbox
from .errors import BehindCamera
from .geometry import Homography
from .raster import convex_hull, fill_polygon
from .warp import Roi

IMAGE_WIDTH = 646
IMAGE_HEIGHT = 324
ROAD_WIDTH_M = 7.2
ROI_LENGTH_M = 200.0
MIN_DEPTH = 1e-6

BACKGROUND = 35
ROAD_GRAY = 85
MARKING_GRAY = 225


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera; ``x``/``y`` give its foot point in the road frame."""

    focal: float = 700.0
    cx: float = (IMAGE_WIDTH - 1) / 2.0
    cy: float = (IMAGE_HEIGHT - 1) / 2.0
    height: float = 5.0
    pitch: float = math.radians(6.0)
    width_px: int = IMAGE_WIDTH
    height_px: int = IMAGE_HEIGHT
    x: float = ROAD_WIDTH_M / 2.0
    y: float = -15.0

    def __post_init__(self):
        if not self.focal > 0:
            raise ValueError("focal length must be positive")
        if not self.height > 0:
            raise ValueError("mount height must be positive")
        if not 0.0 <= self.pitch < math.pi / 2:
            raise ValueError("pitch must lie in [0, pi/2)")
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError("image size must be at least 1x1")

    def basis(self):
        """Camera axes (right, down, forward) in road coordinates."""
        s, c = math.sin(self.pitch), math.cos(self.pitch)
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, -s, -c]), np.array([0.0, c, -s])


def project_point(cam: CameraModel, world) -> Tuple[float, float]:
    """Pixel coordinates of a 3-D road-frame point.

    Raises:
        BehindCamera: if the point has non-positive depth.
    """
    right, down, forward = cam.basis()
    d = np.array(world, dtype=float) - np.array([cam.x, cam.y, cam.height])
    depth = float(d @ forward)
    if depth <= MIN_DEPTH:
        raise BehindCamera(f"point {tuple(world)} is behind the camera (depth {depth:g})")
    return cam.cx + cam.focal * float(d @ right) / depth, cam.cy + cam.focal * float(d @ down) / depth


def ground_homography(cam: CameraModel) -> Homography:
    """Closed-form map from road-plane ``(x, y)`` to image pixels."""
    right, down, forward = cam.basis()
    k = np.array([[cam.focal, 0.0, cam.cx], [0.0, cam.focal, cam.cy], [0.0, 0.0, 1.0]])
    rot = np.vstack([right, down, forward])
    t = -rot @ np.array([cam.x, cam.y, cam.height])
    return Homography.from_matrix(k @ np.column_stack([rot[:, 0], rot[:, 1], t]))


def scene_roi(cam: CameraModel, road_width_m: float = ROAD_WIDTH_M, length_m: float = ROI_LENGTH_M) -> Roi:
    """ROI obtained by projecting the road edges at 0 m and ``length_m``."""
    corners = tuple(
        project_point(cam, (x, y, 0.0))
        for x, y in ((0.0, 0.0), (road_width_m, 0.0), (road_width_m, length_m), (0.0, length_m))
    )
    return Roi(corners, road_width_m, length_m)


@dataclass(frozen=True)
class Vehicle:
    x: float
    y: float
    length: float = 4.5
    width: float = 1.8
    height: float = 1.5
    gray: int = 170

    def corners3d(self) -> np.ndarray:
        hx, hy = self.width / 2.0, self.length / 2.0
        return np.array(
            [
                (self.x + sx * hx, self.y + sy * hy, z)
                for z in (0.0, self.height)
                for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))
            ]
        )

    def footprint(self) -> np.ndarray:
        return self.corners3d()[:4, :2]


@dataclass(frozen=True)
class Scene:
    road_width_m: float = ROAD_WIDTH_M
    lane_count: int = 2
    vehicles: Tuple[Vehicle, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        for v in self.vehicles:
            if v.y < 0 or v.x - v.width / 2 < 0 or v.x + v.width / 2 > self.road_width_m:
                raise ValueError(f"vehicle outside the road: {v}")


def vehicle_bbox(cam: CameraModel, v: Vehicle) -> Optional[BBox]:
    """AABB of the eight projected corners clipped to the image, or None."""
    pts = np.array([project_point(cam, c) for c in v.corners3d()])
    if pts[:, 0].min() == pts[:, 0].max() or pts[:, 1].min() == pts[:, 1].max():
        return None
    raw = BBox(pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())
    return clamp_bbox(raw, cam.width_px, cam.height_px)


def scene_annotations(cam: CameraModel, scene: Scene, image_id=0, category: str = "car") -> List[Annotation]:
    out = []
    for v in scene.vehicles:
        b = vehicle_bbox(cam, v)
        if b is not None:
            out.append(Annotation(image_id, category, b))
    return out


def _ground_quad(cam, quad):
    return [project_point(cam, (x, y, 0.0)) for x, y in quad]


@lru_cache(maxsize=8)
def _background(cam: CameraModel, road_width_m: float, lane_count: int) -> np.ndarray:
    img = np.full((cam.height_px, cam.width_px), BACKGROUND, dtype=np.uint8)
    near = cam.y + 1.0
    far = 2000.0
    w = road_width_m
    fill_polygon(img, _ground_quad(cam, [(0, near), (w, near), (w, far), (0, far)]), ROAD_GRAY)
    stripe = 0.15
    for x0 in (0.0, w - stripe):
        fill_polygon(img, _ground_quad(cam, [(x0, near), (x0 + stripe, near), (x0 + stripe, far), (x0, far)]), MARKING_GRAY)
    for lane in range(1, lane_count):
        xc = lane * w / lane_count
        for y0 in np.arange(0.0, 400.0, 12.0):
            quad = [(xc - stripe / 2, y0), (xc + stripe / 2, y0), (xc + stripe / 2, y0 + 4.0), (xc - stripe / 2, y0 + 4.0)]
            fill_polygon(img, _ground_quad(cam, quad), MARKING_GRAY)
    img.flags.writeable = False
    return img


def render_scene(cam: CameraModel, scene: Scene, image_id=0, noise: float = 0.0):
    """Flat-shaded gray rendering plus ground-truth annotations.

    Args:
        noise: amplitude of optional uniform pixel noise, drawn from a
            generator seeded with ``scene.seed``.
    """
    img = _background(cam, scene.road_width_m, scene.lane_count).copy()
    # far vehicles first so near ones paint over them
    for v in sorted(scene.vehicles, key=lambda v: -v.y):
        pts = np.array([project_point(cam, c) for c in v.corners3d()])
        fill_polygon(img, convex_hull(pts), v.gray)
        fill_polygon(img, pts[4:], min(v.gray + 40, 255))
        fill_polygon(img, pts[[0, 1, 5, 4]], max(v.gray - 40, 0))
    if noise > 0:
        rng = np.random.default_rng(scene.seed)
        jitter = rng.uniform(-noise, noise, size=img.shape)
        img = np.clip(np.rint(img + jitter), 0, 255).astype(np.uint8)
    return img, scene_annotations(cam, scene, image_id)


@dataclass(frozen=True)
class TrafficTemplate:
    """Traffic process driving a synthetic sequence."""

    road_width_m: float = ROAD_WIDTH_M
    lane_count: int = 2
    length_m: float = ROI_LENGTH_M
    frame_interval_s: float = 0.5
    spawn_rate_per_lane: float = 0.3
    speed_range: Tuple[float, float] = (18.0, 28.0)
    min_gap_m: float = 10.0
    lateral_jitter_m: float = 0.2
    vehicle_length_m: float = 4.5
    vehicle_width_m: float = 1.8
    vehicle_height_m: float = 1.5
    gray_range: Tuple[int, int] = (130, 220)


@dataclass
class _Mover:
    lane: int
    x: float
    y: float
    speed: float
    gray: int


def _step(movers: List[_Mover], t: TrafficTemplate, rng: np.random.Generator) -> List[_Mover]:
    dt = t.frame_interval_s
    for lane in range(t.lane_count):
        queue = sorted((m for m in movers if m.lane == lane), key=lambda m: -m.y)
        for leader, follower in zip(queue, queue[1:]):
            if leader.y - follower.y < 2 * t.min_gap_m:
                follower.speed = min(follower.speed, leader.speed)
    for m in movers:
        m.y += m.speed * dt
    movers = [m for m in movers if m.y < t.length_m]
    lane_w = t.road_width_m / t.lane_count
    for lane in range(t.lane_count):
        if rng.random() >= 1.0 - math.exp(-t.spawn_rate_per_lane * dt):
            continue
        speed = rng.uniform(*t.speed_range)
        y = rng.uniform(0.0, speed * dt)
        x = (lane + 0.5) * lane_w + rng.uniform(-t.lateral_jitter_m, t.lateral_jitter_m)
        gray = int(rng.integers(t.gray_range[0], t.gray_range[1] + 1))
        behind = [m for m in movers if m.lane == lane]
        if all(abs(m.y - y) >= t.min_gap_m for m in behind):
            movers.append(_Mover(lane, x, y, speed, gray))
    return movers


@dataclass
class SyntheticSequence:
    camera: CameraModel
    template: TrafficTemplate
    scenes: List[Scene]
    manifest: DatasetManifest
    noise: float = 0.0

    def frames(self) -> Iterator[np.ndarray]:
        for i, scene in enumerate(self.scenes):
            yield render_scene(self.camera, scene, i, self.noise)[0]


def generate_sequence(cam: CameraModel, template: TrafficTemplate = TrafficTemplate(), frame_count: int = 500, seed: int = 42, noise: float = 0.0, file_pattern: str = "frames/{:05d}.png") -> SyntheticSequence:
    """Simulate traffic and collect one scene and annotation set per frame.

    The road is pre-filled by running the traffic process for the time the
    slowest vehicle needs to cross the ROI before the first frame.
    """
    if frame_count < 1:
        raise ValueError("frame_count must be at least 1")
    rng = np.random.default_rng(seed)
    frame_seeds = np.random.SeedSequence(seed).spawn(frame_count)
    movers: List[_Mover] = []
    warmup = math.ceil(template.length_m / template.speed_range[0] / template.frame_interval_s) + 1
    for _ in range(warmup):
        movers = _step(movers, template, rng)
    scenes, images, annotations = [], [], []
    for i in range(frame_count):
        vehicles = tuple(
            Vehicle(m.x, m.y, template.vehicle_length_m, template.vehicle_width_m, template.vehicle_height_m, m.gray)
            for m in movers
        )
        scene = Scene(template.road_width_m, template.lane_count, vehicles, int(frame_seeds[i].generate_state(1)[0]))
        scenes.append(scene)
        image_id = i
        images.append(ImageRecord(image_id, file_pattern.format(i), cam.width_px, cam.height_px))
        annotations.extend(scene_annotations(cam, scene, image_id))
        movers = _step(movers, template, rng)
    roi = scene_roi(cam, template.road_width_m, template.length_m)
    manifest = DatasetManifest("original", tuple(images), tuple(annotations), None, roi, {"seed": seed, "source": "synthetic"})
    return SyntheticSequence(cam, template, scenes, manifest, noise)


@dataclass(frozen=True)
class MissModel:
    """Area-driven stand-in for a trained detector.

    A ground-truth box of pixel area ``a`` is detected with probability
    ``recall_floor + (1 - recall_floor) * min(1, a / reference_area)``.
    """

    reference_area: float = 600.0
    recall_floor: float = 0.1
    confidence_noise: float = 0.05
    jitter: float = 0.04
    seed: int = 42

    def __post_init__(self):
        if not 0.0 <= self.recall_floor <= 1.0:
            raise ValueError("recall_floor must lie in [0, 1]")
        if self.reference_area < 0 or self.confidence_noise < 0 or self.jitter < 0:
            raise ValueError("reference_area, confidence_noise and jitter must be non-negative")

    def size_factor(self, area: float) -> float:
        if self.reference_area == 0:
            return 1.0
        return min(1.0, area / self.reference_area)

    def detection_probability(self, area: float) -> float:
        return self.recall_floor + (1.0 - self.recall_floor) * self.size_factor(area)


def simulate_detector(gts: Sequence[Annotation], miss: MissModel, image_sizes: Optional[Dict] = None) -> List[Annotation]:
    """Turn ground truth into scored detections under ``miss``.

    Every box consumes the same random draws whether or not it is kept, so
    results depend only on the seed and the input order.
    """
    rng = np.random.default_rng(miss.seed)
    out = []
    for g in gts:
        u, conf_noise = rng.random(), rng.standard_normal()
        shake = rng.standard_normal(4)
        b = g.bbox
        if u >= miss.detection_probability(b.area):
            continue
        dx = miss.jitter * b.width
        dy = miss.jitter * b.height
        x0, y0, x1, y1 = b.x_min + dx * shake[0], b.y_min + dy * shake[1], b.x_max + dx * shake[2], b.y_max + dy * shake[3]
        if x1 <= x0 or y1 <= y0:
            continue
        box = BBox(x0, y0, x1, y1)
        if image_sizes is not None and g.image_id in image_sizes:
            box = clamp_bbox(box, *image_sizes[g.image_id])
            if box is None:
                continue
        conf = 0.5 + 0.5 * miss.size_factor(b.area) + miss.confidence_noise * conf_noise
        out.append(Annotation(g.image_id, g.category, box, float(min(max(conf, 0.0), 1.0))))
    return out


def config_to_dict(cam: CameraModel, template: TrafficTemplate, miss: MissModel) -> dict:
    return {"camera": asdict(cam), "traffic": asdict(template), "miss_model": asdict(miss)}


def config_from_dict(d: dict):
    """Build ``(camera, template, miss model)`` from a config mapping; missing keys take defaults."""
    cam = CameraModel(**d.get("camera", {}))
    traffic = dict(d.get("traffic", {}))
    for key in ("speed_range", "gray_range"):
        if key in traffic:
            traffic[key] = tuple(traffic[key])
    return cam, TrafficTemplate(**traffic), MissModel(**d.get("miss_model", {}))
