"""Helper that builds a small, fully self-contained pipeline scene on disk.

A 512x512-pixel mosaic at 100 m/px tiled 256 -> 128 at 50% overlap, with
planted craters written both into the truth catalog and (implicitly) readable
by the synthetic detector. Craters sit on a jittered grid so they never
overlap and every one is interior to at least one patch window with margin
beyond the boundary filter.
"""

import json

import numpy as np

from craterpipe.geo import GeoTransform, meter_to_lonlat
from craterpipe.raster import RasterGrid, save_raster

LUNAR_RADIUS = 1_737_400.0
RESOLUTION = 100.0
MOSAIC_PX = 512
PS_A = 256
PS_R = 128


def plant_craters(n, diam_km_range=(3.0, 6.0), seed=5, mosaic_px=MOSAIC_PX, margin_px=24):
    """Non-overlapping crater centers/radii in meters on a jittered grid."""
    rng = np.random.default_rng(seed)
    cell = 128
    cells_per_axis = mosaic_px // cell
    slots = [(r, c) for r in range(cells_per_axis) for c in range(cells_per_axis)]
    rng.shuffle(slots)
    if n > len(slots):
        raise ValueError(f"cannot plant {n} craters in {len(slots)} slots")
    craters = []
    for r, c in slots[:n]:
        diam_km = rng.uniform(*diam_km_range)
        radius_px = diam_km * 1000.0 / 2.0 / RESOLUTION
        jitter_room = cell / 2.0 - radius_px - margin_px
        assert jitter_room >= 0, "crater too large for its slot"
        cx = (c + 0.5) * cell + rng.uniform(-jitter_room, jitter_room)
        cy = (r + 0.5) * cell + rng.uniform(-jitter_room, jitter_room)
        craters.append((cx * RESOLUTION, -cy * RESOLUTION, diam_km * 500.0))
    return craters


def write_scene(tmp_path, craters, seed=9, noise=None, mosaic_px=MOSAIC_PX,
                extra_config=None):
    """Write rasters, a truth catalog holding the given craters, and a config.

    Returns the config path. ``craters`` is a list of (x_m, y_m, r_m).
    """
    gt = GeoTransform(x_min=0.0, y_max=0.0, resolution=RESOLUTION, body_radius=LUNAR_RADIUS)
    n = mosaic_px
    yy, xx = np.meshgrid(np.arange(n, dtype=np.float32), np.arange(n, dtype=np.float32), indexing="ij")
    intensity = RasterGrid(n, n, "intensity", (xx + 2 * yy) % 251.0, gt)
    elevation = RasterGrid(n, n, "elevation", 500.0 * np.sin(xx / 40.0) * np.cos(yy / 55.0), gt)
    save_raster(intensity, tmp_path / "intensity.bin", dtype="float32")
    save_raster(elevation, tmp_path / "dem.bin", dtype="float32")

    lines = ["id,lon,lat,diam_km"]
    for i, (x_m, y_m, r_m) in enumerate(craters):
        lon, lat = meter_to_lonlat(x_m, y_m, gt)
        lines.append(f"cr{i},{lon!r},{lat!r},{2.0 * r_m / 1000.0!r}")
    (tmp_path / "truth.csv").write_text("\n".join(lines) + "\n")

    config = {
        "seed": seed,
        "workers": 1,
        "out_dir": "out",
        "rasters": {"intensity": "intensity.bin", "elevation": "dem.bin"},
        "bands": [
            {"name": "b", "ps_a": PS_A, "ps_r": PS_R, "overlap": 0.5, "dmin_km": 0.0, "dmax_km": None}
        ],
        "detector": {"kind": "synthetic", "noise": noise or {}},
        "truth_catalog": {"path": "truth.csv", "schema": "generic"},
        "boundary_m": 10,
        "nms": {"delta": 0.2, "enabled": True},
        "eval": {"u": 0.3},
        "grid": {"m_set": [0, 1, 5, 10], "delta_set": [0.1, 0.2, 0.3, 0.4, 0.5], "include_no_nms": True},
    }
    if extra_config:
        config.update(extra_config)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config, indent=2))
    return path
