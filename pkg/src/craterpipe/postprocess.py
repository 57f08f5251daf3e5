"""Detection post-processing: boundary filter, globalization, NMS.

Overlapping tiling means one crater can be detected in several patches and
partially at patch edges. The fix happens in a fixed order: drop boxes
hugging their patch boundary, map the rest to mosaic meters, then greedily
deduplicate by IOU. The boundary filter and globalization are per patch and
parallelize freely; NMS is a single sequential pass because its greedy
order is part of the semantics.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .detector import Detection
from .errors import DetectionError, PipelineError
from .geo import GeoTransform, meter_to_lonlat, pixel_to_meter_xy

__all__ = [
    "BoundaryFilterConfig",
    "NmsConfig",
    "GlobalDetection",
    "remove_boundary",
    "globalize",
    "nms",
    "run_pipeline",
    "write_global_detections",
    "load_global_detections",
    "write_catalog_export",
]


@dataclass(frozen=True)
class BoundaryFilterConfig:
    """Distance threshold (resized pixels) for dropping boundary boxes."""

    m: int

    def __post_init__(self) -> None:
        if not (isinstance(self.m, int) and self.m >= 0):
            raise PipelineError(f"m must be a non-negative integer, got {self.m!r}")


@dataclass(frozen=True)
class NmsConfig:
    """IOU threshold for suppression; enabled=False passes input through."""

    delta: float
    enabled: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.delta <= 1.0:
            raise PipelineError(f"delta must be in [0, 1], got {self.delta}")


@dataclass(frozen=True)
class GlobalDetection:
    """A scored box in mosaic meters with its per-patch provenance."""

    box: tuple[float, float, float, float]
    score: float
    patch_id: str
    pixel_box: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "box", tuple(float(v) for v in self.box))
        object.__setattr__(self, "pixel_box", tuple(float(v) for v in self.pixel_box))
        object.__setattr__(self, "score", float(self.score))
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise PipelineError(f"degenerate global box {self.box}")


def remove_boundary(
    dets: Iterable[Detection], ps_r: int, cfg: BoundaryFilterConfig
) -> list[Detection]:
    """Drop detections within m pixels of their patch edge.

    A box is removed iff min(x1, y1, ps_r - x2, ps_r - y2) <= m, so m = 0
    still removes boxes that touch the edge (those are clipped partials by
    construction).
    """
    kept = []
    for d in dets:
        x1, y1, x2, y2 = d.box
        if min(x1, y1, ps_r - x2, ps_r - y2) > cfg.m:
            kept.append(d)
    return kept


def globalize(
    dets: Iterable[Detection],
    patch_index: Mapping[str, tuple[int, int, float]],
    gt: GeoTransform,
) -> list[GlobalDetection]:
    """Map per-patch pixel boxes to mosaic meters.

    patch_index maps patch_id -> (row0, col0, delta_f). Northing decreases
    with pixel row, so y corners swap; output boxes are re-normalized to
    x1 < x2, y1 < y2. Count and scores are preserved.
    """
    out = []
    for d in dets:
        if d.patch_id not in patch_index:
            raise DetectionError(f"unknown patch id {d.patch_id!r} in detections")
        row0, col0, delta_f = patch_index[d.patch_id]
        px1, py1, px2, py2 = d.box
        x1, y_top = pixel_to_meter_xy(px1, py1, gt, row0, col0, delta_f)
        x2, y_bot = pixel_to_meter_xy(px2, py2, gt, row0, col0, delta_f)
        out.append(
            GlobalDetection(
                box=(x1, min(y_top, y_bot), x2, max(y_top, y_bot)),
                score=d.score,
                patch_id=d.patch_id,
                pixel_box=d.box,
            )
        )
    return out


def nms(dets: list[GlobalDetection], cfg: NmsConfig) -> list[GlobalDetection]:
    """Greedy highest-score-first suppression at IOU >= delta.

    Score ties break deterministically by smaller x1, then smaller y1, then
    input order, so results do not depend on how the input was assembled.
    Survivors are returned in selection (score-descending) order. Disabled
    NMS returns the input unchanged.
    """
    if not cfg.enabled:
        return list(dets)
    if not dets:
        return []

    boxes = np.array([d.box for d in dets], dtype=np.float64)
    scores = np.array([d.score for d in dets], dtype=np.float64)
    x1, y1, x2, y2 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    areas = (x2 - x1) * (y2 - y1)
    idx = np.arange(len(dets))
    order = np.lexsort((idx, y1, x1, -scores))

    suppressed = np.zeros(len(dets), dtype=bool)
    keep: list[int] = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        keep.append(i)
        rest = order[pos + 1 :]
        rest = rest[~suppressed[rest]]
        if rest.size == 0:
            continue
        ix1 = np.maximum(x1[i], x1[rest])
        iy1 = np.maximum(y1[i], y1[rest])
        ix2 = np.minimum(x2[i], x2[rest])
        iy2 = np.minimum(y2[i], y2[rest])
        inter = np.maximum(0.0, ix2 - ix1) * np.maximum(0.0, iy2 - iy1)
        iou = inter / (areas[i] + areas[rest] - inter)
        suppressed[rest[iou >= cfg.delta]] = True
    return [dets[i] for i in keep]


def run_pipeline(
    per_patch: Mapping[str, list[Detection]],
    patch_index: Mapping[str, tuple[int, int, float]],
    gt: GeoTransform,
    ps_r: int,
    bcfg: BoundaryFilterConfig,
    ncfg: NmsConfig,
) -> list[GlobalDetection]:
    """Boundary filter per patch, then globalize, then NMS, in that order.

    Patches are visited in sorted id order so the merged list (and therefore
    NMS tie-breaking) never depends on mapping order.
    """
    merged: list[GlobalDetection] = []
    for patch_id in sorted(per_patch):
        kept = remove_boundary(per_patch[patch_id], ps_r, bcfg)
        merged.extend(globalize(kept, patch_index, gt))
    return nms(merged, ncfg)


# ---------------------------------------------------------------------------
# output formats


def write_global_detections(dets: list[GlobalDetection], path: str | Path) -> None:
    """CSV of globalized boxes: meters, score, then provenance columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1_m", "y1_m", "x2_m", "y2_m", "score", "patch_id", "px1", "py1", "px2", "py2"])
        for d in dets:
            writer.writerow(
                [repr(v) for v in d.box]
                + [repr(d.score), d.patch_id]
                + [repr(v) for v in d.pixel_box]
            )


def load_global_detections(path: str | Path) -> list[GlobalDetection]:
    path = Path(path)
    if not path.exists():
        raise DetectionError(f"global detections file not found: {path}")
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 10:
                raise DetectionError(f"{path}:{lineno}: expected 10 fields, got {len(row)}")
            try:
                vals = [float(v) for v in row[:5]]
                pix = tuple(float(v) for v in row[6:])
            except ValueError as exc:
                raise DetectionError(f"{path}:{lineno}: non-numeric field ({exc})") from exc
            out.append(
                GlobalDetection(
                    box=(vals[0], vals[1], vals[2], vals[3]),
                    score=vals[4],
                    patch_id=row[5],
                    pixel_box=pix,
                )
            )
    return out


def write_catalog_export(
    dets: list[GlobalDetection], gt: GeoTransform, path: str | Path, provenance: dict | None = None
) -> None:
    """Export detections in catalog form (lon, lat, diam_km).

    The box center inverts through the projection; the diameter is the mean
    box side in kilometers, matching how detections are size-gated.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "lon", "lat", "diam_km"])
        for i, d in enumerate(dets):
            x1, y1, x2, y2 = d.box
            lon, lat = meter_to_lonlat((x1 + x2) / 2.0, (y1 + y2) / 2.0, gt)
            diam_km = ((x2 - x1) + (y2 - y1)) / 2.0 / 1000.0
            writer.writerow([f"det#{i}", repr(lon), repr(lat), repr(diam_km)])
    side = {"n_detections": len(dets)}
    if provenance:
        side.update(provenance)
    Path(str(path) + ".provenance.json").write_text(json.dumps(side, indent=2) + "\n")
