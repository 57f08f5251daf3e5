"""Georeferenced raster grids: file IO, resampling, slope, byte scaling, tiling.

The on-disk format is deliberately plain: a raw little-endian scalar payload
(row-major) plus a text header sidecar next to it (same stem, ``.hdr``
extension) declaring dimensions, scalar type, band kind, nodata sentinel and
the geotransform. See read_header for the exact keys.

Tiling cuts a mosaic into overlapping square windows, scales each window
linearly to bytes, box-downsamples it to the detector input size and stamps
it with the resize factor needed to map detections back to mosaic pixels.
All grid types are immutable after construction; tiling emits independent
patches and is safe to parallelize per patch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import RasterError
from .geo import GeoTransform

__all__ = [
    "BAND_KINDS",
    "RasterGrid",
    "PatchSpec",
    "FusedPatch",
    "read_header",
    "load_raster",
    "save_raster",
    "resample",
    "compute_slope",
    "rescale_to_byte",
    "tile",
    "replicate_single_band",
    "patch_grid",
    "write_patch_image",
]

BAND_KINDS = ("intensity", "elevation", "slope")

_DTYPES = {
    "uint8": "<u1",
    "int16": "<i2",
    "int32": "<i4",
    "float32": "<f4",
    "float64": "<f8",
}


@dataclass(frozen=True)
class RasterGrid:
    """A single-band georeferenced grid.

    values is a (height, width) array; elevation is meters, slope degrees,
    intensity unitless. Cells equal to the nodata sentinel are invalid.
    """

    width: int
    height: int
    band_kind: str
    values: np.ndarray
    geotransform: GeoTransform
    nodata: float | None = None

    def __post_init__(self) -> None:
        if self.band_kind not in BAND_KINDS:
            raise RasterError(f"unknown band kind {self.band_kind!r}, expected one of {BAND_KINDS}")
        if self.values.shape != (self.height, self.width):
            raise RasterError(
                f"value shape {self.values.shape} does not match "
                f"declared {self.height}x{self.width} grid"
            )
        if self.band_kind == "slope" and np.issubdtype(self.values.dtype, np.floating):
            valid = self.valid_mask()
            if valid.any():
                v = self.values[valid]
                if v.min() < 0.0 or v.max() > 90.0:
                    raise RasterError("slope values must lie in [0, 90] degrees")

    def valid_mask(self) -> np.ndarray:
        if self.nodata is None:
            return np.ones(self.values.shape, dtype=bool)
        return self.values != self.nodata


@dataclass(frozen=True)
class PatchSpec:
    """Window geometry for tiling: actual side, resized side and overlap."""

    ps_a: int
    ps_r: int
    overlap_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.ps_r <= 0 or self.ps_a <= 0:
            raise RasterError(f"patch sides must be positive, got {self.ps_a}/{self.ps_r}")
        if self.ps_r > self.ps_a:
            raise RasterError(f"ps_r ({self.ps_r}) must not exceed ps_a ({self.ps_a})")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise RasterError(f"overlap_fraction must be in [0, 1), got {self.overlap_fraction}")
        stride = self.ps_a * (1.0 - self.overlap_fraction)
        if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
            raise RasterError(
                f"ps_a * (1 - overlap) must be a positive integer stride, got {stride}"
            )

    @property
    def stride(self) -> int:
        return round(self.ps_a * (1.0 - self.overlap_fraction))

    @property
    def delta_f(self) -> float:
        return self.ps_a / self.ps_r


@dataclass(frozen=True)
class FusedPatch:
    """A resized 3-channel byte patch plus its placement in the mosaic.

    channels has shape (3, ps_r, ps_r), uint8, ordered (intensity,
    elevation, slope). delta_f is ps_a / ps_r.
    """

    patch_id: str
    row0: int
    col0: int
    spec: PatchSpec
    channels: np.ndarray
    delta_f: float = field(default=0.0)

    def __post_init__(self) -> None:
        if self.channels.shape != (3, self.spec.ps_r, self.spec.ps_r):
            raise RasterError(
                f"channels shape {self.channels.shape} does not match ps_r={self.spec.ps_r}"
            )
        if self.channels.dtype != np.uint8:
            raise RasterError("patch channels must be uint8")
        if self.delta_f == 0.0:
            object.__setattr__(self, "delta_f", self.spec.delta_f)


# ---------------------------------------------------------------------------
# file IO


def _header_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".hdr")


def read_header(path: str | Path) -> dict:
    """Parse the text sidecar of a raster payload.

    Required keys: width, height, dtype, band, x_min, y_max, resolution,
    body_radius. Optional: nodata. One ``key = value`` pair per line; blank
    lines and ``#`` comments are ignored.
    """
    hdr_path = _header_path(path)
    if not hdr_path.exists():
        raise RasterError(f"raster header not found: {hdr_path}")
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(hdr_path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise RasterError(f"{hdr_path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()

    required = ("width", "height", "dtype", "band", "x_min", "y_max", "resolution", "body_radius")
    missing = [k for k in required if k not in fields]
    if missing:
        raise RasterError(f"{hdr_path}: missing header keys: {', '.join(missing)}")
    if fields["dtype"] not in _DTYPES:
        raise RasterError(f"{hdr_path}: unknown dtype {fields['dtype']!r}")
    if fields["band"] not in BAND_KINDS:
        raise RasterError(f"{hdr_path}: unknown band kind {fields['band']!r}")

    header = {
        "width": int(fields["width"]),
        "height": int(fields["height"]),
        "dtype": fields["dtype"],
        "band": fields["band"],
        "nodata": float(fields["nodata"]) if "nodata" in fields else None,
        "geotransform": GeoTransform(
            x_min=float(fields["x_min"]),
            y_max=float(fields["y_max"]),
            resolution=float(fields["resolution"]),
            body_radius=float(fields["body_radius"]),
        ),
    }
    return header


def load_raster(path: str | Path, header: dict | None = None) -> RasterGrid:
    """Read a raw payload plus its header sidecar into a RasterGrid."""
    path = Path(path)
    if not path.exists():
        raise RasterError(f"raster payload not found: {path}")
    hdr = header if header is not None else read_header(path)
    dtype = np.dtype(_DTYPES[hdr["dtype"]])
    raw = path.read_bytes()
    expected = hdr["width"] * hdr["height"] * dtype.itemsize
    if len(raw) != expected:
        raise RasterError(
            f"{path}: payload holds {len(raw) // dtype.itemsize} values, "
            f"header declares {hdr['width'] * hdr['height']}"
        )
    values = np.frombuffer(raw, dtype=dtype).reshape(hdr["height"], hdr["width"])
    return RasterGrid(
        width=hdr["width"],
        height=hdr["height"],
        band_kind=hdr["band"],
        values=values,
        geotransform=hdr["geotransform"],
        nodata=hdr["nodata"],
    )


def save_raster(grid: RasterGrid, path: str | Path, dtype: str = "float32") -> None:
    """Write payload and header sidecar for a grid."""
    if dtype not in _DTYPES:
        raise RasterError(f"unknown dtype {dtype!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(np.ascontiguousarray(grid.values, dtype=_DTYPES[dtype]).tobytes())
    gt = grid.geotransform
    lines = [
        f"width = {grid.width}",
        f"height = {grid.height}",
        f"dtype = {dtype}",
        f"band = {grid.band_kind}",
        f"x_min = {gt.x_min!r}",
        f"y_max = {gt.y_max!r}",
        f"resolution = {gt.resolution!r}",
        f"body_radius = {gt.body_radius!r}",
    ]
    if grid.nodata is not None:
        lines.append(f"nodata = {grid.nodata!r}")
    _header_path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# grid operations


def resample(grid: RasterGrid, target_resolution: float) -> RasterGrid:
    """Bilinearly resample a grid to a new resolution.

    The output extent covers the input extent (sizes round up), cell centers
    are aligned to the shared top-left corner and edges are replicated where
    a sample falls outside the input cell-center lattice. A cell is nodata
    when any input cell contributing weight to it is nodata.
    """
    if target_resolution <= 0:
        raise RasterError(f"target resolution must be positive, got {target_resolution}")
    valid = grid.valid_mask()
    if not valid.any():
        raise RasterError("cannot resample an all-nodata grid")

    s_in = grid.geotransform.resolution
    s_out = target_resolution
    out_w = math.ceil(grid.width * s_in / s_out)
    out_h = math.ceil(grid.height * s_in / s_out)

    def axis_samples(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(n_out) + 0.5) * s_out / s_in - 0.5
        i0 = np.floor(pos).astype(np.int64)
        frac = pos - i0
        lo = np.clip(i0, 0, n_in - 1)
        hi = np.clip(i0 + 1, 0, n_in - 1)
        return lo, hi, frac

    c0, c1, fx = axis_samples(out_w, grid.width)
    r0, r1, fy = axis_samples(out_h, grid.height)

    v = np.asarray(grid.values, dtype=np.float64)
    v00 = v[np.ix_(r0, c0)]
    v01 = v[np.ix_(r0, c1)]
    v10 = v[np.ix_(r1, c0)]
    v11 = v[np.ix_(r1, c1)]

    wx1 = fx[np.newaxis, :]
    wy1 = fy[:, np.newaxis]
    out = (
        (1.0 - wy1) * ((1.0 - wx1) * v00 + wx1 * v01)
        + wy1 * ((1.0 - wx1) * v10 + wx1 * v11)
    )

    nodata = grid.nodata
    if nodata is not None:
        bad = ~valid
        eps = 1e-12
        w00 = (1.0 - wy1) * (1.0 - wx1)
        w01 = (1.0 - wy1) * wx1
        w10 = wy1 * (1.0 - wx1)
        w11 = wy1 * wx1
        poisoned = (
            (bad[np.ix_(r0, c0)] & (w00 > eps))
            | (bad[np.ix_(r0, c1)] & (w01 > eps))
            | (bad[np.ix_(r1, c0)] & (w10 > eps))
            | (bad[np.ix_(r1, c1)] & (w11 > eps))
        )
        out[poisoned] = nodata

    gt = grid.geotransform
    return RasterGrid(
        width=out_w,
        height=out_h,
        band_kind=grid.band_kind,
        values=out,
        geotransform=GeoTransform(gt.x_min, gt.y_max, s_out, gt.body_radius),
        nodata=nodata,
    )


def compute_slope(dem: RasterGrid) -> RasterGrid:
    """Derive a slope grid (degrees) from an elevation grid.

    Uses the 3x3 finite-difference scheme with (1, 2, 1) weighting per
    column/row, gradients divided by 8 * resolution, slope =
    arctan(sqrt(gx^2 + gy^2)). Border cells see edge-replicated neighbors.
    A cell is nodata when any cell of its 3x3 window is nodata.
    """
    if dem.band_kind != "elevation":
        raise RasterError(f"slope needs an elevation grid, got {dem.band_kind!r}")
    if dem.width < 3 or dem.height < 3:
        raise RasterError(f"grid too small for slope: {dem.width}x{dem.height}")

    s = dem.geotransform.resolution
    z = np.pad(np.asarray(dem.values, dtype=np.float64), 1, mode="edge")

    nw, n, ne = z[:-2, :-2], z[:-2, 1:-1], z[:-2, 2:]
    w_, e_ = z[1:-1, :-2], z[1:-1, 2:]
    sw, s_, se = z[2:, :-2], z[2:, 1:-1], z[2:, 2:]

    gx = ((ne + 2.0 * e_ + se) - (nw + 2.0 * w_ + sw)) / (8.0 * s)
    gy = ((sw + 2.0 * s_ + se) - (nw + 2.0 * n + ne)) / (8.0 * s)
    slope = np.degrees(np.arctan(np.hypot(gx, gy)))

    nodata = dem.nodata
    if nodata is not None:
        valid = np.pad(dem.valid_mask(), 1, mode="edge")
        ok = np.ones(slope.shape, dtype=bool)
        for dr in (0, 1, 2):
            for dc in (0, 1, 2):
                ok &= valid[dr : dr + slope.shape[0], dc : dc + slope.shape[1]]
        slope[~ok] = nodata

    return RasterGrid(
        width=dem.width,
        height=dem.height,
        band_kind="slope",
        values=slope,
        geotransform=dem.geotransform,
        nodata=nodata,
    )


def _byte_scale(
    values: np.ndarray, valid: np.ndarray, bounds: tuple[float, float] | None = None
) -> np.ndarray:
    """Linear 0-255 scaling over valid cells; invalid and degenerate -> 0.

    bounds fixes the (vmin, vmax) range externally (mosaic-wide scaling);
    by default the range comes from the valid cells themselves.
    """
    out = np.zeros(values.shape, dtype=np.uint8)
    if not valid.any():
        return out
    v = np.asarray(values, dtype=np.float64)
    vmin, vmax = bounds if bounds is not None else (v[valid].min(), v[valid].max())
    if vmax == vmin:
        return out
    scaled = np.clip(np.rint(255.0 * (v - vmin) / (vmax - vmin)), 0, 255)
    out[valid] = scaled[valid].astype(np.uint8)
    return out


def rescale_to_byte(grid: RasterGrid) -> RasterGrid:
    """Map a grid linearly onto [0, 255]; nodata cells map to 0.

    A constant grid maps to all zeros: a flat window carries no contrast, and
    this keeps the operation total. The result is monotone in the input.
    """
    valid = grid.valid_mask()
    if not valid.any():
        raise RasterError("cannot rescale a grid with no valid cells")
    return RasterGrid(
        width=grid.width,
        height=grid.height,
        band_kind=grid.band_kind,
        values=_byte_scale(grid.values, valid),
        geotransform=grid.geotransform,
        nodata=None,
    )


def _axis_offsets(size: int, ps_a: int, stride: int) -> list[int]:
    """Window start offsets covering [0, size); the last window is anchored
    at size - ps_a rather than padded, so no terrain is fabricated."""
    offsets = list(range(0, size - ps_a + 1, stride))
    if offsets[-1] != size - ps_a:
        offsets.append(size - ps_a)
    return offsets


def patch_grid(width: int, height: int, spec: PatchSpec) -> list[tuple[str, int, int]]:
    """Placement of every patch window for a mosaic of the given size.

    Returns (patch_id, row0, col0) in row-major order. Patch ids embed the
    zero-padded offsets so lexicographic and spatial order agree.
    """
    if width < spec.ps_a or height < spec.ps_a:
        raise RasterError(
            f"mosaic {width}x{height} is smaller than the patch side {spec.ps_a}"
        )
    rows = _axis_offsets(height, spec.ps_a, spec.stride)
    cols = _axis_offsets(width, spec.ps_a, spec.stride)
    return [
        (f"r{r0:06d}_c{c0:06d}", r0, c0)
        for r0 in rows
        for c0 in cols
    ]


def _area_average(window: np.ndarray, out_side: int) -> np.ndarray:
    """Box-filter downsample of a square array to out_side x out_side."""
    n = window.shape[0]
    if n == out_side:
        return np.asarray(window, dtype=np.float64)
    if n % out_side == 0:
        f = n // out_side
        return window.reshape(out_side, f, out_side, f).mean(axis=(1, 3))
    w = _box_weights(n, out_side)
    return w @ np.asarray(window, dtype=np.float64) @ w.T


def _box_weights(n: int, out: int) -> np.ndarray:
    f = n / out
    w = np.zeros((out, n))
    for j in range(out):
        lo = j * f
        hi = lo + f
        for i in range(int(math.floor(lo)), min(int(math.ceil(hi)), n)):
            w[j, i] = min(hi, i + 1.0) - max(lo, float(i))
    return w / f


def _grids_compatible(grids: list[RasterGrid]) -> bool:
    first = grids[0]
    return all(
        g.width == first.width and g.height == first.height and g.geotransform == first.geotransform
        for g in grids[1:]
    )


def _mosaic_range(grid: RasterGrid) -> tuple[float, float] | None:
    valid = grid.valid_mask()
    if not valid.any():
        return None
    v = np.asarray(grid.values, dtype=np.float64)[valid]
    return float(v.min()), float(v.max())


def tile(
    intensity: RasterGrid,
    elevation: RasterGrid,
    slope: RasterGrid,
    spec: PatchSpec,
    scale_mode: str = "patch",
) -> list[FusedPatch]:
    """Cut three co-registered grids into fused overlapping byte patches.

    Each ps_a-sided window is extracted per channel, scaled linearly to
    bytes, box-downsampled to ps_r x ps_r and stamped with the resize factor.
    scale_mode "patch" computes the linear scale per window (maximizes local
    contrast); "mosaic" uses the global min/max instead. Nodata cells map to
    byte 0 before downsampling.
    """
    grids = [intensity, elevation, slope]
    if not _grids_compatible(grids):
        raise RasterError("intensity, elevation and slope grids must share size and geotransform")
    if scale_mode not in ("patch", "mosaic"):
        raise RasterError(f"unknown scale_mode {scale_mode!r}")

    placements = patch_grid(intensity.width, intensity.height, spec)
    masks = [g.valid_mask() for g in grids]
    mosaic_ranges = [_mosaic_range(g) for g in grids] if scale_mode == "mosaic" else None

    patches = []
    for patch_id, r0, c0 in placements:
        channels = np.empty((3, spec.ps_r, spec.ps_r), dtype=np.uint8)
        for k, grid in enumerate(grids):
            win = grid.values[r0 : r0 + spec.ps_a, c0 : c0 + spec.ps_a]
            ok = masks[k][r0 : r0 + spec.ps_a, c0 : c0 + spec.ps_a]
            bounds = mosaic_ranges[k] if scale_mode == "mosaic" else None
            byte = _byte_scale(win, ok, bounds=bounds)
            channels[k] = np.rint(_area_average(byte, spec.ps_r)).astype(np.uint8)
        patches.append(
            FusedPatch(patch_id=patch_id, row0=r0, col0=c0, spec=spec, channels=channels)
        )
    return patches


def replicate_single_band(
    grid: RasterGrid, spec: PatchSpec, scale_mode: str = "patch"
) -> list[FusedPatch]:
    """Tile a single band into all three channels.

    Single-input inference is realized by replication: the one available
    band is scaled and copied into each channel position before tiling.
    """
    return tile(grid, grid, grid, spec, scale_mode=scale_mode)


def write_patch_image(patch: FusedPatch, path: str | Path) -> None:
    """Export a fused patch as a binary PPM (P6) for visual inspection."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    side = patch.spec.ps_r
    rgb = np.ascontiguousarray(np.moveaxis(patch.channels, 0, 2))
    with open(path, "wb") as fh:
        fh.write(f"P6\n{side} {side}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
