"""Ground-truth crater catalogs: loading, combining, filtering, geometrizing.

Catalogs are comma-separated text with a header row. Column names differ
between the common catalog families, so the loader takes a schema: either a
preset name from SCHEMAS or an explicit column mapping. Rows that parse but
violate the crater invariants (non-positive diameter, latitude out of range)
are rejected and counted; rows that do not parse at all count as malformed
and abort the load once their fraction exceeds a tolerance.

All operations return new catalogs; nothing here mutates.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CatalogError
from .geo import GeoTransform, lonlat_to_meter

__all__ = [
    "SCHEMAS",
    "CatalogCrater",
    "Catalog",
    "load_catalog",
    "save_catalog",
    "combine",
    "filter_by_size",
    "filter_by_region",
    "to_boxes",
]

# Shipped column mappings for the usual catalog families. "id" is optional;
# absent ids are synthesized from the row number.
SCHEMAS: dict[str, dict[str, str]] = {
    "generic": {"id": "id", "lon": "lon", "lat": "lat", "diam_km": "diam_km"},
    "head": {"lon": "Lon", "lat": "Lat", "diam_km": "Diam_km"},
    "povilaitis": {"lon": "lon", "lat": "lat", "diam_km": "diam_km"},
    "robbins": {
        "id": "CRATER_ID",
        "lon": "LON_CIRC_IMG",
        "lat": "LAT_CIRC_IMG",
        "diam_km": "DIAM_CIRC_IMG",
    },
}


@dataclass(frozen=True)
class CatalogCrater:
    """One catalog entry: position in degrees, diameter in kilometers."""

    id: str
    lon: float
    lat: float
    diam_km: float


@dataclass(frozen=True)
class Catalog:
    name: str
    craters: tuple[CatalogCrater, ...]
    source: str = ""
    n_rejected: int = 0

    def __post_init__(self) -> None:
        ids = [c.id for c in self.craters]
        if len(set(ids)) != len(ids):
            raise CatalogError(f"catalog {self.name!r} has duplicate crater ids")

    def __len__(self) -> int:
        return len(self.craters)


def _resolve_schema(schema: str | dict[str, str]) -> dict[str, str]:
    if isinstance(schema, str):
        if schema not in SCHEMAS:
            raise CatalogError(f"unknown schema preset {schema!r}, expected one of {sorted(SCHEMAS)}")
        return SCHEMAS[schema]
    for key in ("lon", "lat", "diam_km"):
        if key not in schema:
            raise CatalogError(f"schema mapping is missing the {key!r} column")
    return schema


def _row_ok(lon: float, lat: float, diam_km: float) -> bool:
    return diam_km > 0 and -90.0 <= lat <= 90.0


def load_catalog(
    path: str | Path,
    schema: str | dict[str, str] = "generic",
    name: str | None = None,
    max_malformed_fraction: float = 0.0,
) -> Catalog:
    """Read a delimited-text catalog.

    Rows failing the crater invariants are dropped and counted in
    n_rejected. Malformed rows (wrong field count, non-numeric values) are
    also dropped, but if their fraction of all data rows exceeds
    max_malformed_fraction the load fails.
    """
    path = Path(path)
    if not path.exists():
        raise CatalogError(f"catalog file not found: {path}")
    mapping = _resolve_schema(schema)
    cat_name = name if name is not None else path.stem

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return Catalog(name=cat_name, craters=(), source=str(path))
        missing = [col for col in (mapping["lon"], mapping["lat"], mapping["diam_km"])
                   if col not in reader.fieldnames]
        if missing:
            raise CatalogError(f"{path}: missing columns: {', '.join(missing)}")
        id_col = mapping.get("id")
        if id_col is not None and id_col not in reader.fieldnames:
            id_col = None

        craters: list[CatalogCrater] = []
        n_rows = 0
        n_malformed = 0
        n_rejected = 0
        for rownum, row in enumerate(reader, start=1):
            n_rows += 1
            try:
                lon = float(row[mapping["lon"]])
                lat = float(row[mapping["lat"]])
                diam = float(row[mapping["diam_km"]])
            except (TypeError, ValueError, KeyError):
                n_malformed += 1
                n_rejected += 1
                continue
            if not _row_ok(lon, lat, diam):
                n_rejected += 1
                continue
            cid = row[id_col] if id_col is not None else f"{cat_name}#{rownum}"
            craters.append(CatalogCrater(id=cid, lon=lon, lat=lat, diam_km=diam))

    if n_rows > 0 and n_malformed / n_rows > max_malformed_fraction:
        raise CatalogError(
            f"{path}: {n_malformed} of {n_rows} rows are malformed "
            f"(tolerance {max_malformed_fraction})"
        )
    return Catalog(name=cat_name, craters=tuple(craters), source=str(path), n_rejected=n_rejected)


def save_catalog(cat: Catalog, path: str | Path, provenance: dict | None = None) -> None:
    """Write a catalog as generic-schema CSV plus a provenance sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "lon", "lat", "diam_km"])
        for c in cat.craters:
            writer.writerow([c.id, repr(c.lon), repr(c.lat), repr(c.diam_km)])
    side = {"name": cat.name, "source": cat.source, "n_craters": len(cat)}
    if provenance:
        side.update(provenance)
    Path(str(path) + ".provenance.json").write_text(json.dumps(side, indent=2) + "\n")


def filter_by_size(cat: Catalog, dmin_km: float, dmax_km: float | None = None) -> Catalog:
    """Craters with dmin <= diameter < dmax (dmax None means unbounded).

    Half-open on purpose: adjacent size bins partition without double
    counting.
    """
    if dmax_km is not None and not dmin_km < dmax_km:
        raise CatalogError(f"need dmin < dmax, got [{dmin_km}, {dmax_km})")
    kept = tuple(
        c for c in cat.craters
        if c.diam_km >= dmin_km and (dmax_km is None or c.diam_km < dmax_km)
    )
    hi = "inf" if dmax_km is None else repr(dmax_km)
    return Catalog(
        name=cat.name,
        craters=kept,
        source=f"{cat.source} | size [{dmin_km!r}, {hi}) km",
        n_rejected=cat.n_rejected,
    )


def filter_by_region(
    cat: Catalog, lon_min: float, lon_max: float, lat_min: float, lat_max: float
) -> Catalog:
    """Craters with lon in [lon_min, lon_max) and lat in [lat_min, lat_max)."""
    if lon_min >= lon_max or lat_min >= lat_max:
        raise CatalogError(
            f"empty or inverted region bounds: lon [{lon_min}, {lon_max}), lat [{lat_min}, {lat_max})"
        )
    kept = tuple(
        c for c in cat.craters
        if lon_min <= c.lon < lon_max and lat_min <= c.lat < lat_max
    )
    return Catalog(
        name=cat.name,
        craters=kept,
        source=f"{cat.source} | region lon[{lon_min},{lon_max}) lat[{lat_min},{lat_max})",
        n_rejected=cat.n_rejected,
    )


def combine(parts: list[tuple[Catalog, float, float | None]]) -> Catalog:
    """Union catalogs, each restricted to its [dmin, dmax) diameter range.

    Ids are namespaced by source catalog name so the union stays unique.
    Overlapping size ranges are legal but suspicious, so they warn.
    """
    if not parts:
        raise CatalogError("combine needs at least one part")

    ranges = [(dmin, dmax) for _, dmin, dmax in parts]
    for i in range(len(ranges)):
        for j in range(i + 1, len(ranges)):
            lo_i, hi_i = ranges[i][0], ranges[i][1]
            lo_j, hi_j = ranges[j][0], ranges[j][1]
            hi_i_v = float("inf") if hi_i is None else hi_i
            hi_j_v = float("inf") if hi_j is None else hi_j
            if max(lo_i, lo_j) < min(hi_i_v, hi_j_v):
                warnings.warn(
                    f"combine: size ranges [{lo_i}, {hi_i}) and [{lo_j}, {hi_j}) overlap",
                    stacklevel=2,
                )

    craters: list[CatalogCrater] = []
    names = []
    for cat, dmin, dmax in parts:
        names.append(cat.name)
        for c in filter_by_size(cat, dmin, dmax).craters:
            craters.append(CatalogCrater(f"{cat.name}:{c.id}", c.lon, c.lat, c.diam_km))
    return Catalog(
        name="+".join(names),
        craters=tuple(craters),
        source="; ".join(f"{cat.name}[{dmin},{dmax})" for cat, dmin, dmax in parts),
    )


def to_boxes(cat: Catalog, gt: GeoTransform) -> np.ndarray:
    """Project craters onto the mosaic plane as (N, 4) boxes in meters.

    Each crater becomes the tight axis-aligned square around its rim circle:
    [x - r, y - r, x + r, y + r] with r = diam_km * 500. Order is preserved.
    """
    boxes = np.empty((len(cat.craters), 4), dtype=np.float64)
    for i, c in enumerate(cat.craters):
        x, y = lonlat_to_meter(c.lon, c.lat, gt)
        r = c.diam_km * 500.0
        boxes[i] = (x - r, y - r, x + r, y + r)
    return boxes
