"""Detection interface plus the two shipped implementations.

The neural detector is a seam: anything that maps a fused patch to scored
boxes can drive the pipeline. Two implementations live here. The synthetic
oracle detector projects a truth catalog into each patch and emits
configurable noisy detections; it exists so the post-processing and
evaluation stages can be exercised and accepted without a trained model.
The external path ingests detection records produced by a real model.

Detection record wire format, one record per line, comma separated, no
header (blank lines and lines starting with ``#`` are ignored):

    patch_id,x1,y1,x2,y2,score

Coordinates are resized-patch pixels as decimal text, score in [0, 1].
"""

from __future__ import annotations

import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import catalog as catalog_mod
from .errors import DetectionError
from .geo import GeoTransform
from .raster import FusedPatch

__all__ = [
    "Detection",
    "NoiseConfig",
    "DetectorInterface",
    "SyntheticDetector",
    "synthetic_detect",
    "load_detections",
    "save_detections",
]


@dataclass(frozen=True)
class Detection:
    """A scored box in the pixel frame of one resized patch."""

    patch_id: str
    box: tuple[float, float, float, float]
    score: float

    def __post_init__(self) -> None:
        # normalize numpy scalars so equality and repr behave like floats
        object.__setattr__(self, "box", tuple(float(v) for v in self.box))
        object.__setattr__(self, "score", float(self.score))
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise DetectionError(f"degenerate box {self.box} in patch {self.patch_id}")
        if x1 < 0 or y1 < 0:
            raise DetectionError(f"negative coordinates in box {self.box}")
        if not 0.0 <= self.score <= 1.0:
            raise DetectionError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class NoiseConfig:
    """Noise model of the synthetic detector.

    center_jitter_px perturbs box centers (std dev, resized pixels),
    radius_jitter_frac scales radii by 1 + N(0, frac^2), miss_rate drops
    truth craters, false_positive_rate is the expected count of spurious
    boxes per patch (Poisson), with radii drawn uniformly from
    fp_radius_px. All randomness derives from (seed, patch_id), so patches
    can be processed in any order or thread count with identical results.
    """

    center_jitter_px: float = 0.0
    radius_jitter_frac: float = 0.0
    false_positive_rate: float = 0.0
    miss_rate: float = 0.0
    seed: int = 0
    fp_radius_px: tuple[float, float] = (12.5, 50.0)

    def __post_init__(self) -> None:
        if min(self.center_jitter_px, self.radius_jitter_frac, self.false_positive_rate) < 0:
            raise DetectionError("noise rates must be non-negative")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise DetectionError(f"miss_rate must be in [0, 1], got {self.miss_rate}")
        lo, hi = self.fp_radius_px
        if not 0 < lo <= hi:
            raise DetectionError(f"bad fp_radius_px range {self.fp_radius_px}")


class DetectorInterface(ABC):
    """Contract every detector implementation satisfies.

    detect must be deterministic given (patch, seed) and safe to call
    concurrently on distinct patches. channel_layout declares what the
    implementation accepts: "any", or "distinct" for detectors that need
    three genuinely different channels.
    """

    channel_layout: str = "any"

    def check_channels(self, patch: FusedPatch) -> None:
        if self.channel_layout == "distinct":
            c = patch.channels
            if np.array_equal(c[0], c[1]) and np.array_equal(c[1], c[2]):
                raise DetectionError(
                    f"detector requires 3 distinct channels but patch {patch.patch_id} "
                    "carries one replicated band"
                )

    @abstractmethod
    def detect(self, patch: FusedPatch) -> list[Detection]:
        """Return detections satisfying the Detection invariants; boxes may
        be clipped to the patch boundary."""


def _patch_rng(seed: int, patch_id: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed & 0xFFFFFFFF, zlib.crc32(patch_id.encode("utf-8"))])
    )


class SyntheticDetector(DetectorInterface):
    """Oracle detector driven by a truth catalog and a noise model.

    For every truth crater whose projected box intersects the patch window,
    a detection is emitted with probability 1 - miss_rate at the pixel-frame
    projection of the truth box, center jittered, radius scaled, clipped to
    the patch. Poisson-many spurious boxes are added uniformly over the
    patch. True detections score in [0.7, 1.0), spurious in [0.3, 0.9); the
    exact ranges are arbitrary but fixed, since only the ordering matters
    downstream.
    """

    def __init__(self, truth: catalog_mod.Catalog, gt: GeoTransform, noise: NoiseConfig):
        self.gt = gt
        self.noise = noise
        self.truth_boxes = catalog_mod.to_boxes(truth, gt)

    def detect(self, patch: FusedPatch) -> list[Detection]:
        self.check_channels(patch)
        rng = _patch_rng(self.noise.seed, patch.patch_id)
        gt = self.gt
        s = gt.resolution
        ps_a = patch.spec.ps_a
        ps_r = patch.spec.ps_r
        df = patch.delta_f

        x_lo = gt.x_min + patch.col0 * s
        x_hi = gt.x_min + (patch.col0 + ps_a) * s
        y_hi = gt.y_max - patch.row0 * s
        y_lo = gt.y_max - (patch.row0 + ps_a) * s

        detections: list[Detection] = []
        for bx1, by1, bx2, by2 in self.truth_boxes:
            if bx1 >= x_hi or bx2 <= x_lo or by1 >= y_hi or by2 <= y_lo:
                continue
            # One draw per candidate keeps the stream stable across configs.
            missed = rng.random() < self.noise.miss_rate
            jx = rng.normal(0.0, self.noise.center_jitter_px)
            jy = rng.normal(0.0, self.noise.center_jitter_px)
            jr = rng.normal(0.0, self.noise.radius_jitter_frac)
            score = rng.uniform(0.7, 1.0)
            if missed:
                continue

            px1 = ((bx1 - gt.x_min) / s - patch.col0) / df
            px2 = ((bx2 - gt.x_min) / s - patch.col0) / df
            py1 = ((gt.y_max - by2) / s - patch.row0) / df
            py2 = ((gt.y_max - by1) / s - patch.row0) / df
            cx = (px1 + px2) / 2.0 + jx
            cy = (py1 + py2) / 2.0 + jy
            half = max((px2 - px1) / 2.0 * (1.0 + jr), 0.25)
            det = self._clipped(patch.patch_id, cx, cy, half, ps_r, score)
            if det is not None:
                detections.append(det)

        for _ in range(rng.poisson(self.noise.false_positive_rate)):
            r = rng.uniform(*self.noise.fp_radius_px)
            cx = rng.uniform(0.0, ps_r)
            cy = rng.uniform(0.0, ps_r)
            score = rng.uniform(0.3, 0.9)
            det = self._clipped(patch.patch_id, cx, cy, r, ps_r, score)
            if det is not None:
                detections.append(det)
        return detections

    @staticmethod
    def _clipped(
        patch_id: str, cx: float, cy: float, half: float, ps_r: int, score: float
    ) -> Detection | None:
        x1 = max(cx - half, 0.0)
        y1 = max(cy - half, 0.0)
        x2 = min(cx + half, float(ps_r))
        y2 = min(cy + half, float(ps_r))
        if x1 >= x2 or y1 >= y2:
            return None
        return Detection(patch_id=patch_id, box=(x1, y1, x2, y2), score=score)


def synthetic_detect(
    patch: FusedPatch,
    truth: catalog_mod.Catalog,
    gt: GeoTransform,
    noise: NoiseConfig,
) -> list[Detection]:
    """One-shot form of SyntheticDetector.detect."""
    return SyntheticDetector(truth, gt, noise).detect(patch)


def load_detections(
    path: str | Path,
    score_floor: float | None = None,
    ps_r: int | None = None,
) -> dict[str, list[Detection]]:
    """Read a detection record file, grouped by patch id.

    Records are invariant-checked; a bad record fails the load with its line
    number. score_floor optionally drops records scoring below it, for model
    outputs that were not thresholded upstream. When ps_r is given,
    coordinates beyond it are rejected too.
    """
    path = Path(path)
    if not path.exists():
        raise DetectionError(f"detections file not found: {path}")
    grouped: dict[str, list[Detection]] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise DetectionError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
        patch_id = parts[0].strip()
        try:
            x1, y1, x2, y2, score = (float(p) for p in parts[1:])
        except ValueError as exc:
            raise DetectionError(f"{path}:{lineno}: non-numeric field ({exc})") from exc
        try:
            det = Detection(patch_id=patch_id, box=(x1, y1, x2, y2), score=score)
        except DetectionError as exc:
            raise DetectionError(f"{path}:{lineno}: {exc}") from exc
        if ps_r is not None and (x2 > ps_r or y2 > ps_r):
            raise DetectionError(f"{path}:{lineno}: box exceeds patch side {ps_r}")
        if score_floor is not None and score < score_floor:
            continue
        grouped.setdefault(patch_id, []).append(det)
    return grouped


def save_detections(per_patch: dict[str, list[Detection]], path: str | Path) -> None:
    """Write detections in the record wire format, patches in sorted order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for patch_id in sorted(per_patch):
        for d in per_patch[patch_id]:
            x1, y1, x2, y2 = d.box
            lines.append(f"{patch_id},{x1!r},{y1!r},{x2!r},{y2!r},{d.score!r}")
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
