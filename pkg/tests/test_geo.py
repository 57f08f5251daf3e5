"""Coordinate algebra tests: conversions, inverses, projection."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from craterpipe.errors import GeoError
from craterpipe.geo import (
    GeoTransform,
    MapCrater,
    PixelCrater,
    lonlat_to_meter,
    meter_to_lonlat,
    meter_to_pixel,
    pixel_to_meter,
    resize_factor,
)

R = 1_737_400.0


def test_resize_factor_values():
    assert resize_factor(1024, 512) == 2.0
    assert resize_factor(4096, 512) == 8.0
    assert resize_factor(512, 512) == 1.0


def test_resize_factor_rejects_bad_sides():
    with pytest.raises(GeoError):
        resize_factor(0, 512)
    with pytest.raises(GeoError):
        resize_factor(512, -1)
    with pytest.raises(GeoError):
        resize_factor(256, 512)


def test_geotransform_validation():
    with pytest.raises(GeoError):
        GeoTransform(0.0, 0.0, -1.0, R)
    with pytest.raises(GeoError):
        GeoTransform(0.0, 0.0, 100.0, 0.0)


def test_pixel_to_meter_direct_substitution():
    gt = GeoTransform(x_min=0.0, y_max=0.0, resolution=100.0, body_radius=R)
    c = pixel_to_meter(PixelCrater(10.0, 20.0, 5.0), gt, 0, 0, 2.0)
    assert c.x_meter == 2000.0
    assert c.y_meter == -4000.0
    assert c.r_meter == 1000.0


def test_pixel_to_meter_origin_case():
    gt = GeoTransform(x_min=-500.0, y_max=750.0, resolution=1.0, body_radius=R)
    c = pixel_to_meter(PixelCrater(0.0, 0.0, 1.0), gt, 0, 0, 1.0)
    assert (c.x_meter, c.y_meter, c.r_meter) == (-500.0, 750.0, 1.0)


def test_pixel_to_meter_with_patch_offset():
    gt = GeoTransform(x_min=0.0, y_max=0.0, resolution=100.0, body_radius=R)
    c = pixel_to_meter(PixelCrater(0.0, 0.0, 5.0), gt, 512, 512, 2.0)
    assert c.x_meter == 51200.0
    assert c.y_meter == -51200.0
    assert c.r_meter == 1000.0


def test_meter_to_pixel_inverts_the_example():
    gt = GeoTransform(x_min=0.0, y_max=0.0, resolution=100.0, body_radius=R)
    p = meter_to_pixel(MapCrater(2000.0, -4000.0, 1000.0), gt, 0, 0, 2.0)
    assert (p.x_pxl, p.y_pxl, p.r_pxl) == (10.0, 20.0, 5.0)


def test_meter_to_pixel_at_left_edge():
    gt = GeoTransform(x_min=0.0, y_max=0.0, resolution=100.0, body_radius=R)
    p = meter_to_pixel(MapCrater(0.0, -100.0, 1.0), gt, 0, 6, 2.0)
    assert p.x_pxl == -6 / 2.0


def test_round_trip_many_samples():
    rng = np.random.default_rng(11)
    gt = GeoTransform(x_min=-5.46e6, y_max=1.82e6, resolution=100.0, body_radius=R)
    for delta_f in (1.0, 2.0, 8.0):
        for _ in range(300):
            c = PixelCrater(
                x_pxl=rng.uniform(0, 512),
                y_pxl=rng.uniform(0, 512),
                r_pxl=rng.uniform(0.1, 100),
            )
            row0 = int(rng.integers(0, 40000))
            col0 = int(rng.integers(0, 40000))
            back = meter_to_pixel(pixel_to_meter(c, gt, row0, col0, delta_f), gt, row0, col0, delta_f)
            assert abs(back.x_pxl - c.x_pxl) < 1e-6
            assert abs(back.y_pxl - c.y_pxl) < 1e-6
            assert abs(back.r_pxl - c.r_pxl) < 1e-6


def test_monotone_axes():
    gt = GeoTransform(x_min=0.0, y_max=0.0, resolution=50.0, body_radius=R)
    xs = [pixel_to_meter(PixelCrater(x, 10.0, 1.0), gt, 0, 0, 2.0).x_meter for x in (1.0, 2.0, 5.0)]
    assert xs[0] < xs[1] < xs[2]
    ys = [pixel_to_meter(PixelCrater(10.0, y, 1.0), gt, 0, 0, 2.0).y_meter for y in (1.0, 2.0, 5.0)]
    assert ys[0] > ys[1] > ys[2]


@given(
    r_pxl=st.floats(min_value=0.01, max_value=500.0),
    delta_f=st.sampled_from([1.0, 2.0, 8.0]),
    s=st.floats(min_value=1.0, max_value=500.0),
)
def test_radius_scaling_is_exact(r_pxl, delta_f, s):
    gt = GeoTransform(x_min=0.0, y_max=0.0, resolution=s, body_radius=R)
    c = pixel_to_meter(PixelCrater(1.0, 1.0, r_pxl), gt, 0, 0, delta_f)
    assert c.r_meter == r_pxl * s * delta_f


def test_lonlat_projection_cases():
    gt = GeoTransform(x_min=0.0, y_max=0.0, resolution=100.0, body_radius=R)
    assert lonlat_to_meter(0.0, 0.0, gt) == (0.0, 0.0)
    x, _ = lonlat_to_meter(180.0, 0.0, gt)
    assert x == pytest.approx(math.pi * R, abs=1e-6)
    with pytest.raises(GeoError):
        lonlat_to_meter(10.0, 91.0, gt)


def test_lonlat_round_trip():
    gt = GeoTransform(x_min=0.0, y_max=0.0, resolution=100.0, body_radius=R)
    rng = np.random.default_rng(3)
    for _ in range(200):
        lon = rng.uniform(-180, 180)
        lat = rng.uniform(-90, 90)
        x, y = lonlat_to_meter(lon, lat, gt)
        lon2, lat2 = meter_to_lonlat(x, y, gt)
        assert abs(lon2 - lon) < 1e-9
        assert abs(lat2 - lat) < 1e-9
