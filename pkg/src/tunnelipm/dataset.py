"""Dataset manifests, box transforms, train/test splits and distance sections.

A manifest describes one experiment arm: image records, ground-truth or
detected boxes, and the ROI expressed in that arm's own pixel frame. The
ROI is all that is needed to rebuild the image-to-road mapping used for
assigning boxes to 50 m sections.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from .errors import EmptyDataset, ManifestError, PointAtInfinity
from .geometry import Homography, SCALE_TOLERANCE, apply_homography, homography_from_correspondences
from .warp import Roi

CASES = ("original", "case1", "case2")
DEFAULT_SECTION_LENGTH_M = 50.0
DEFAULT_SECTION_COUNT = 4


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = tuple(float(v) for v in (self.x_min, self.y_min, self.x_max, self.y_max))
        for name, v in zip(("x_min", "y_min", "x_max", "y_max"), vals):
            object.__setattr__(self, name, v)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box coordinates must be finite: {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"box must have positive extent: {vals}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    def corners(self):
        return (
            (self.x_min, self.y_min),
            (self.x_max, self.y_min),
            (self.x_max, self.y_max),
            (self.x_min, self.y_max),
        )

    def shifted(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def to_list(self) -> list:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


def clamp_bbox(b: BBox, width: int, height: int) -> Optional[BBox]:
    """Clamp to the pixel-center extent ``[0, W-1] x [0, H-1]``; None if empty."""
    x0 = min(max(b.x_min, 0.0), width - 1.0)
    x1 = min(max(b.x_max, 0.0), width - 1.0)
    y0 = min(max(b.y_min, 0.0), height - 1.0)
    y1 = min(max(b.y_max, 0.0), height - 1.0)
    if x1 <= x0 or y1 <= y0:
        return None
    return BBox(x0, y0, x1, y1)


@dataclass(frozen=True)
class Annotation:
    image_id: Any
    category: str
    bbox: BBox
    confidence: Optional[float] = None

    def __post_init__(self):
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")

    def with_bbox(self, bbox: BBox) -> "Annotation":
        return replace(self, bbox=bbox)


@dataclass(frozen=True)
class ImageRecord:
    id: Any
    file: str
    width: int
    height: int


@dataclass(frozen=True)
class DatasetManifest:
    case: str
    images: Tuple[ImageRecord, ...]
    annotations: Tuple[Annotation, ...] = ()
    homography: Optional[Homography] = None
    roi: Optional[Roi] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        if self.case not in CASES:
            raise ManifestError(f"case must be one of {CASES}, got {self.case!r}")
        ids = [im.id for im in self.images]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate image ids in manifest")
        known = set(ids)
        for ann in self.annotations:
            if ann.image_id not in known:
                raise ManifestError(f"annotation refers to unknown image id {ann.image_id!r}")
        sizes = {(im.width, im.height) for im in self.images}
        if len(sizes) > 1:
            raise ManifestError(f"inconsistent image sizes in one manifest: {sorted(sizes)}")

    @property
    def image_size(self) -> Optional[Tuple[int, int]]:
        return (self.images[0].width, self.images[0].height) if self.images else None

    def by_image(self) -> Dict[Any, List[Annotation]]:
        groups: Dict[Any, List[Annotation]] = defaultdict(list)
        for ann in self.annotations:
            groups[ann.image_id].append(ann)
        return groups

    def subset(self, image_ids: Iterable) -> "DatasetManifest":
        keep = set(image_ids)
        return replace(
            self,
            images=tuple(im for im in self.images if im.id in keep),
            annotations=tuple(a for a in self.annotations if a.image_id in keep),
        )

    def to_dict(self) -> dict:
        d: Dict[str, Any] = {
            "case": self.case,
            "images": [
                {"id": im.id, "file": im.file, "width": im.width, "height": im.height}
                for im in self.images
            ],
            "annotations": [],
        }
        for ann in self.annotations:
            a = {"image_id": ann.image_id, "category": ann.category, "bbox": ann.bbox.to_list()}
            if ann.confidence is not None:
                a["confidence"] = ann.confidence
            d["annotations"].append(a)
        if self.homography is not None:
            d["homography"] = self.homography.to_list()
        if self.roi is not None:
            d["roi"] = self.roi.to_dict()
        if self.meta:
            d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        try:
            images = tuple(
                ImageRecord(im["id"], str(im["file"]), int(im["width"]), int(im["height"]))
                for im in d["images"]
            )
            annotations = tuple(
                Annotation(
                    a["image_id"],
                    str(a.get("category", "car")),
                    BBox(*(float(v) for v in a["bbox"])),
                    None if a.get("confidence") is None else float(a["confidence"]),
                )
                for a in d.get("annotations", [])
            )
            homography = None
            if d.get("homography") is not None:
                homography = Homography(tuple(float(v) for v in d["homography"]))
            roi = Roi.from_dict(d["roi"]) if d.get("roi") is not None else None
            return cls(str(d["case"]), images, annotations, homography, roi, dict(d.get("meta", {})))
        except ManifestError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"invalid manifest: {exc!r}") from exc


def load_manifest(path) -> DatasetManifest:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ManifestError(f"{path}: top level must be an object")
    return DatasetManifest.from_dict(data)


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=1)
        fh.write("\n")


def transform_bbox(h: Homography, b: BBox, out_bounds: Tuple[int, int]) -> Optional[BBox]:
    """Axis-aligned hull of the four mapped corners, clamped to ``out_bounds``.

    Returns None when the clamped box is empty.

    Raises:
        PointAtInfinity: if a corner maps to infinity, or the corners lie on
            both sides of the vanishing line.
    """
    h31, h32, h33 = h.coeffs[6:]
    scales = [h31 * x + h32 * y + h33 for x, y in b.corners()]
    if any(abs(s) < SCALE_TOLERANCE for s in scales):
        raise PointAtInfinity(f"box {b.to_list()} touches the vanishing line")
    if len({s > 0 for s in scales}) > 1:
        raise PointAtInfinity(f"box {b.to_list()} straddles the vanishing line")
    pts = [apply_homography(h, c) for c in b.corners()]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    width, height = out_bounds
    return clamp_bbox(BBox(min(xs), min(ys), max(xs), max(ys)), width, height)


@dataclass(frozen=True)
class SectionMap:
    """Image-to-road mapping plus the distance binning along the road."""

    h_image_to_world: Homography
    section_length_m: float = DEFAULT_SECTION_LENGTH_M
    section_count: int = DEFAULT_SECTION_COUNT

    def __post_init__(self):
        if not self.section_length_m > 0:
            raise ValueError("section_length_m must be positive")
        if self.section_count < 1:
            raise ValueError("section_count must be at least 1")

    @classmethod
    def from_roi(cls, roi: Roi, section_length_m=DEFAULT_SECTION_LENGTH_M, section_count=DEFAULT_SECTION_COUNT):
        h = homography_from_correspondences(roi.corners, roi.world_corners())
        return cls(h, float(section_length_m), int(section_count))

    def world_y(self, b: BBox) -> float:
        return apply_homography(self.h_image_to_world, b.center)[1]


def section_map_for(manifest: DatasetManifest, section_length_m=DEFAULT_SECTION_LENGTH_M, section_count=DEFAULT_SECTION_COUNT) -> SectionMap:
    if manifest.roi is None:
        raise ManifestError("manifest has no ROI; cannot place boxes in distance sections")
    return SectionMap.from_roi(manifest.roi, section_length_m, section_count)


def assign_section(b: BBox, m: SectionMap) -> int:
    """0-based section of a box, from the road position of its center.

    Sections are half-open ``[k*L, (k+1)*L)``; positions before the first or
    past the last section clamp into it.
    """
    index = math.floor(m.world_y(b) / m.section_length_m)
    return min(max(index, 0), m.section_count - 1)


def filter_by_section(annotations: Iterable[Annotation], m: SectionMap, section: int) -> List[Annotation]:
    return [a for a in annotations if assign_section(a.bbox, m) == section]


def split_train_test(d: DatasetManifest, ratio: float = 0.8, seed: int = 42):
    """Shuffle images with ``seed`` and split them ``floor(n * ratio)`` / rest."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie strictly between 0 and 1, got {ratio}")
    n = len(d.images)
    if n == 0:
        raise EmptyDataset("cannot split a manifest without images")
    order = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(n * ratio + 1e-9)
    ids = [d.images[i].id for i in order]
    return d.subset(ids[:n_train]), d.subset(ids[n_train:])


@dataclass(frozen=True)
class SectionCount:
    section: int
    images: int
    objects: int


@dataclass(frozen=True)
class DatasetReport:
    case: str
    rows: Tuple[SectionCount, ...]
    total_images: int
    total_objects: int

    def as_rows(self):
        """Rows with 1-based section labels and a trailing total."""
        out = [(str(r.section + 1), r.images, r.objects) for r in self.rows]
        out.append(("total", self.total_images, self.total_objects))
        return out


def dataset_report(d: DatasetManifest, m: Optional[SectionMap]) -> DatasetReport:
    """Per-section image and object counts.

    An image counts once in every section holding at least one of its
    objects, so section image counts can add up to more than the total.
    """
    count = m.section_count if m is not None else DEFAULT_SECTION_COUNT
    images = [set() for _ in range(count)]
    objects = [0] * count
    for ann in d.annotations:
        k = assign_section(ann.bbox, m)
        images[k].add(ann.image_id)
        objects[k] += 1
    rows = tuple(SectionCount(k, len(images[k]), objects[k]) for k in range(count))
    total_images = len({a.image_id for a in d.annotations})
    return DatasetReport(d.case, rows, total_images, len(d.annotations))
