"""Shared fixtures: small in-memory grids and on-disk raster/catalog files."""

import numpy as np
import pytest

from craterpipe.geo import GeoTransform
from craterpipe.raster import RasterGrid, save_raster

LUNAR_RADIUS = 1_737_400.0


@pytest.fixture
def gt100():
    return GeoTransform(x_min=0.0, y_max=0.0, resolution=100.0, body_radius=LUNAR_RADIUS)


def make_grid(values, band_kind="elevation", resolution=100.0, nodata=None,
              x_min=0.0, y_max=0.0, body_radius=LUNAR_RADIUS):
    values = np.asarray(values, dtype=np.float64)
    return RasterGrid(
        width=values.shape[1],
        height=values.shape[0],
        band_kind=band_kind,
        values=values,
        geotransform=GeoTransform(x_min=x_min, y_max=y_max, resolution=resolution, body_radius=body_radius),
        nodata=nodata,
    )


def planar_dem(n, gx=0.0, gy=0.0, resolution=100.0):
    """Elevation plane with the given metric gradients, sampled at cell centers."""
    cols = (np.arange(n) + 0.5) * resolution
    rows = (np.arange(n) + 0.5) * resolution
    return make_grid(gy * rows[:, None] + gx * cols[None, :], resolution=resolution)


def write_raster(tmp_path, name, grid, dtype="float64"):
    path = tmp_path / name
    save_raster(grid, path, dtype=dtype)
    return path


def write_catalog_csv(tmp_path, name, rows, header="id,lon,lat,diam_km"):
    path = tmp_path / name
    lines = [header] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path
