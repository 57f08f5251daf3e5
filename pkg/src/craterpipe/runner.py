"""Orchestration of the pipeline stages behind the CLI commands.

A run goes: load rasters (resampling elevation onto the intensity grid and
deriving slope when not supplied), tile per size band, detect per patch on a
thread pool, boundary-filter, globalize, deduplicate, union the bands, gate
by size, count against the truth catalog, and write reports plus a manifest.
Merging is always over sorted patch ids, so results are identical for any
worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import catalog as catalog_mod
from .config import CatalogConfig, PipelineConfig, write_manifest
from .detector import Detection, DetectorInterface, SyntheticDetector, load_detections, save_detections
from .errors import ConfigError, RasterError
from .evaluate import (
    EvalConfig,
    GridSearchResult,
    LocalizationReport,
    MetricsReport,
    cross_verify,
    grid_search,
    localization_stats,
    match_and_count,
    size_gate,
    write_gridsearch,
    write_metrics,
)
from .geo import GeoTransform
from .postprocess import (
    GlobalDetection,
    load_global_detections,
    run_pipeline,
    write_catalog_export,
    write_global_detections,
)
from .raster import (
    FusedPatch,
    PatchSpec,
    RasterGrid,
    compute_slope,
    load_raster,
    replicate_single_band,
    resample,
    tile,
    write_patch_image,
)

__all__ = [
    "RunResult",
    "load_stack",
    "detect_patches",
    "run_full",
    "run_tile",
    "run_detect_dump",
    "run_gridsearch",
    "run_crossmatch",
]


@dataclass
class RunResult:
    detections: list[GlobalDetection]
    metrics: MetricsReport
    localization: LocalizationReport
    gt: GeoTransform
    out_dir: Path
    written: list[Path]


def _input_paths(cfg: PipelineConfig) -> list[Path]:
    paths = []
    for p in (cfg.intensity_path, cfg.elevation_path, cfg.slope_path, cfg.single_band_path):
        rp = cfg.resolve(p)
        if rp is not None:
            paths.append(rp)
            hdr = rp.with_suffix(".hdr")
            if hdr.exists():
                paths.append(hdr)
    for cat in (cfg.truth_catalog, cfg.verify_catalog):
        if cat is not None:
            paths.append(cfg.resolve(cat.path))
    if cfg.detector.kind == "external" and cfg.detector.path:
        paths.append(cfg.resolve(cfg.detector.path))
    return [p for p in paths if p.exists()]


def load_stack(cfg: PipelineConfig) -> tuple[RasterGrid | None, RasterGrid | None, RasterGrid | None, RasterGrid | None, GeoTransform]:
    """Load the raster inputs and return (intensity, elevation, slope,
    single_band, geotransform).

    Elevation is resampled onto the intensity resolution when they differ;
    slope is derived from elevation when not supplied. In single-band mode
    only that raster is loaded.
    """
    if cfg.single_band_path is not None:
        band = load_raster(cfg.resolve(cfg.single_band_path))
        return None, None, None, band, band.geotransform

    intensity = load_raster(cfg.resolve(cfg.intensity_path))
    elevation = load_raster(cfg.resolve(cfg.elevation_path))
    if elevation.geotransform.resolution != intensity.geotransform.resolution:
        elevation = resample(elevation, intensity.geotransform.resolution)
    if cfg.slope_path is not None:
        slope = load_raster(cfg.resolve(cfg.slope_path))
    else:
        slope = compute_slope(elevation)
    for name, grid in (("elevation", elevation), ("slope", slope)):
        if grid.width != intensity.width or grid.height != intensity.height:
            raise RasterError(
                f"{name} grid {grid.width}x{grid.height} does not match "
                f"intensity {intensity.width}x{intensity.height}"
            )
    return intensity, elevation, slope, None, intensity.geotransform


def _band_patches(cfg: PipelineConfig, band, stack) -> list[FusedPatch]:
    intensity, elevation, slope, single, _ = stack
    spec = PatchSpec(ps_a=band.ps_a, ps_r=band.ps_r, overlap_fraction=band.overlap)
    if single is not None:
        return replicate_single_band(single, spec, scale_mode=cfg.scale_mode)
    return tile(intensity, elevation, slope, spec, scale_mode=cfg.scale_mode)


def detect_patches(
    patches: list[FusedPatch], detector: DetectorInterface, workers: int
) -> dict[str, list[Detection]]:
    """Run the detector over patches on a thread pool.

    Results are keyed and later merged by patch id, so completion order is
    irrelevant to the output.
    """
    if workers <= 1:
        return {p.patch_id: detector.detect(p) for p in patches}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(detector.detect, patches))
    return {p.patch_id: dets for p, dets in zip(patches, results)}


def _load_truth(cfg: PipelineConfig, cat_cfg: CatalogConfig) -> catalog_mod.Catalog:
    cat = catalog_mod.load_catalog(cfg.resolve(cat_cfg.path), schema=cat_cfg.schema)
    if cat_cfg.region is not None:
        cat = catalog_mod.filter_by_region(cat, *cat_cfg.region)
    if cat_cfg.dmin_km is not None or cat_cfg.dmax_km is not None:
        cat = catalog_mod.filter_by_size(cat, cat_cfg.dmin_km or 0.0, cat_cfg.dmax_km)
    return cat


def _band_detector(cfg: PipelineConfig, band, truth: catalog_mod.Catalog, gt: GeoTransform) -> SyntheticDetector:
    band_truth = catalog_mod.filter_by_size(truth, band.dmin_km, band.dmax_km)
    return SyntheticDetector(band_truth, gt, cfg.detector.noise)


def _per_band_detections(cfg: PipelineConfig, stack, truth, gt) -> tuple[list[GlobalDetection], dict]:
    """Tile, detect and post-process every band; return the union plus
    per-band context for reporting."""
    if cfg.detector.kind == "external" and len(cfg.bands) != 1:
        raise ConfigError("an external detections file maps onto exactly one band's patch grid")
    all_survivors: list[GlobalDetection] = []
    info: dict[str, dict] = {}
    for band in cfg.bands:
        patches = _band_patches(cfg, band, stack)
        patch_index = {p.patch_id: (p.row0, p.col0, p.delta_f) for p in patches}
        ps_r = band.ps_r
        if cfg.detector.kind == "external":
            per_patch = load_detections(
                cfg.resolve(cfg.detector.path), score_floor=cfg.detector.score_floor, ps_r=ps_r
            )
            unknown = set(per_patch) - set(patch_index)
            if unknown:
                raise ConfigError(
                    f"external detections reference unknown patch ids: {sorted(unknown)[:5]}"
                )
        else:
            det = _band_detector(cfg, band, truth, gt)
            per_patch = detect_patches(patches, det, cfg.workers)
        survivors = run_pipeline(per_patch, patch_index, gt, ps_r, cfg.boundary_cfg(), cfg.nms_cfg())
        all_survivors.extend(survivors)
        info[band.name] = {
            "n_patches": len(patches),
            "n_raw": sum(len(v) for v in per_patch.values()),
            "n_survivors": len(survivors),
        }
    return all_survivors, info


def run_full(cfg: PipelineConfig) -> RunResult:
    """The complete run: detection through metrics, with files written."""
    if cfg.truth_catalog is None:
        raise ConfigError("run needs a truth_catalog")
    out_dir = cfg.out_path
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    t_total = time.perf_counter()

    t0 = time.perf_counter()
    stack = load_stack(cfg)
    gt = stack[4]
    truth = _load_truth(cfg, cfg.truth_catalog)
    truth_boxes = catalog_mod.to_boxes(truth, gt)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    survivors, band_info = _per_band_detections(cfg, stack, truth, gt)
    timings["detect_and_postprocess"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    gated = size_gate(survivors, cfg.eval)
    metrics = match_and_count(gated, truth_boxes, cfg.eval)
    loc = localization_stats(gated, truth_boxes, cfg.eval)
    timings["evaluate"] = time.perf_counter() - t0

    written = []
    det_path = out_dir / "detections_global.csv"
    write_global_detections(survivors, det_path)
    written.append(det_path)

    cat_path = out_dir / "detections_catalog.csv"
    write_catalog_export(survivors, gt, cat_path, provenance={"seed": cfg.seed})
    written.append(cat_path)
    written.append(Path(str(cat_path) + ".provenance.json"))

    metrics_path = out_dir / "metrics.csv"
    write_metrics(
        metrics,
        metrics_path,
        extra={
            "n_gated_out": len(survivors) - len(gated),
            "loc_mean_iou_pct": "" if loc.mean_iou_pct is None else repr(loc.mean_iou_pct),
            "loc_std_iou_pct": "" if loc.std_iou_pct is None else repr(loc.std_iou_pct),
            "loc_n_matched": loc.n_matched,
        },
    )
    written.append(metrics_path)

    summary_path = out_dir / "summary.txt"
    summary_path.write_text(_summary_text(cfg, metrics, loc, band_info))
    written.append(summary_path)

    timings["total"] = time.perf_counter() - t_total
    write_manifest(out_dir, cfg, timings, _input_paths(cfg), written)
    return RunResult(
        detections=survivors, metrics=metrics, localization=loc, gt=gt, out_dir=out_dir, written=written
    )


def _summary_text(cfg, metrics, loc, band_info) -> str:
    lines = [
        f"detections kept: {metrics.n_detections} (of which TP {metrics.tp}, FP {metrics.fp})",
        f"truth craters:   {metrics.n_truth} (FN {metrics.fn}, raw {metrics.fn_raw})",
        f"precision = {metrics.precision:.6f}{'' if metrics.precision_defined else ' (undefined: no detections)'}",
        f"recall    = {metrics.recall:.6f}{'' if metrics.recall_defined else ' (undefined: no truth)'}",
        f"f1        = {metrics.f1:.6f}{'' if metrics.f1_defined else ' (undefined)'}",
        f"iou threshold u = {metrics.u}",
    ]
    if loc.n_matched:
        lines.append(
            f"localization: mean {loc.mean_iou_pct:.2f}% std {loc.std_iou_pct:.2f}% over {loc.n_matched} matches"
        )
    else:
        lines.append("localization: no matched detections")
    for name, info in band_info.items():
        lines.append(
            f"band {name}: {info['n_patches']} patches, {info['n_raw']} raw detections, "
            f"{info['n_survivors']} after post-processing"
        )
    lines.append(f"boundary m = {cfg.boundary_m}, nms delta = {cfg.nms_delta}, nms enabled = {cfg.nms_enabled}")
    return "\n".join(lines) + "\n"


def run_tile(cfg: PipelineConfig, export_images: bool = True) -> tuple[Path, int]:
    """Write the patch index (and optionally patch images) for every band."""
    out_dir = cfg.out_path
    out_dir.mkdir(parents=True, exist_ok=True)
    stack = load_stack(cfg)
    n_total = 0
    index_path = out_dir / "patch_index.csv"
    with open(index_path, "w", newline="") as fh:
        fh.write("patch_id,row0,col0,delta_f\n")
        for band in cfg.bands:
            patches = _band_patches(cfg, band, stack)
            n_total += len(patches)
            for p in patches:
                fh.write(f"{p.patch_id},{p.row0},{p.col0},{p.delta_f!r}\n")
                if export_images:
                    write_patch_image(p, out_dir / "patches" / band.name / f"{p.patch_id}.ppm")
    return index_path, n_total


def run_detect_dump(cfg: PipelineConfig) -> list[Path]:
    """Synthetic-only dump of per-patch detections in the wire format.

    Patch ids are only unique within one band's tiling, so multi-band
    configs get one file per band.
    """
    if cfg.detector.kind != "synthetic":
        raise ConfigError("the detect command only supports the synthetic detector")
    if cfg.truth_catalog is None:
        raise ConfigError("detect needs a truth_catalog")
    out_dir = cfg.out_path
    out_dir.mkdir(parents=True, exist_ok=True)
    stack = load_stack(cfg)
    gt = stack[4]
    truth = _load_truth(cfg, cfg.truth_catalog)
    paths = []
    for band in cfg.bands:
        patches = _band_patches(cfg, band, stack)
        det = _band_detector(cfg, band, truth, gt)
        per_patch = detect_patches(patches, det, cfg.workers)
        name = "detections_patch.csv" if len(cfg.bands) == 1 else f"detections_patch_{band.name}.csv"
        path = out_dir / name
        save_detections(per_patch, path)
        paths.append(path)
    return paths


def run_gridsearch(cfg: PipelineConfig) -> tuple[GridSearchResult, Path]:
    """Sweep (m, delta) on the configured inputs and write the cell table."""
    if cfg.truth_catalog is None:
        raise ConfigError("gridsearch needs a truth_catalog")
    out_dir = cfg.out_path
    out_dir.mkdir(parents=True, exist_ok=True)
    stack = load_stack(cfg)
    gt = stack[4]
    truth = _load_truth(cfg, cfg.truth_catalog)
    truth_boxes = catalog_mod.to_boxes(truth, gt)

    if len(cfg.bands) != 1:
        raise ConfigError("gridsearch expects exactly one size band")
    band = cfg.bands[0]
    patches = _band_patches(cfg, band, stack)
    patch_index = {p.patch_id: (p.row0, p.col0, p.delta_f) for p in patches}
    if cfg.detector.kind == "external":
        per_patch = load_detections(
            cfg.resolve(cfg.detector.path), score_floor=cfg.detector.score_floor, ps_r=band.ps_r
        )
    else:
        det = _band_detector(cfg, band, truth, gt)
        per_patch = detect_patches(patches, det, cfg.workers)

    result = grid_search(
        per_patch,
        patch_index,
        gt,
        truth_boxes,
        band.ps_r,
        cfg.grid.m_set,
        cfg.grid.delta_set,
        cfg.eval,
        include_no_nms=cfg.grid.include_no_nms,
    )
    path = out_dir / "gridsearch.csv"
    write_gridsearch(result, path)
    return result, path


def run_crossmatch(cfg: PipelineConfig, detections_path: str | Path | None = None) -> tuple:
    """Classify a detections file against the truth and verify catalogs."""
    if cfg.truth_catalog is None or cfg.verify_catalog is None:
        raise ConfigError("crossmatch needs both truth_catalog and verify_catalog")
    out_dir = cfg.out_path
    out_dir.mkdir(parents=True, exist_ok=True)

    if cfg.geotransform is not None:
        gt = cfg.geotransform
    else:
        try:
            gt = load_stack(cfg)[4]
        except (RasterError, ConfigError) as exc:
            raise ConfigError(
                "crossmatch needs either a geotransform block in the config or loadable rasters"
            ) from exc

    det_path = Path(detections_path) if detections_path else cfg.out_path / "detections_global.csv"
    dets = load_global_detections(det_path)
    gated = size_gate(dets, cfg.eval)

    boxes_a = catalog_mod.to_boxes(_load_truth(cfg, cfg.truth_catalog), gt)
    boxes_b = catalog_mod.to_boxes(_load_truth(cfg, cfg.verify_catalog), gt)
    report = cross_verify(gated, boxes_a, boxes_b, cfg.eval)

    path = out_dir / "crossmatch.csv"
    with open(path, "w") as fh:
        fh.write("class,detection_index,patch_id,score\n")
        for cls, indices in (
            ("known", report.known),
            ("confirmed_new", report.confirmed_new),
            ("unverified", report.unverified),
        ):
            for i in indices:
                fh.write(f"{cls},{i},{gated[i].patch_id},{gated[i].score!r}\n")
    summary = out_dir / "crossmatch_summary.txt"
    k, c, uv = report.counts
    summary.write_text(
        f"known (in primary catalog):        {k}\n"
        f"confirmed new (only in verifier):  {c}\n"
        f"unverified (in neither):           {uv}\n"
        f"total detections classified:       {k + c + uv}\n"
        f"iou threshold u = {report.u}\n"
    )
    return report, path
