"""Rasters, SAR-like histogram matching, patches and training-pair streams."""
from .dataset import (
    MODES,
    DatasetManifest,
    PairDataset,
    build_pair_stream,
    extract_patches,
    load_patches,
    parse_manifest,
    read_manifest,
)
from .histogram import (
    default_target,
    exponential_target,
    histogram,
    inverse_cdf,
    ks_distance,
    parse_target,
    read_target,
    sar_like_transform,
)
from .raster import ImageRaster, bdsr_bytes, parse_bdsr, parse_pgm, pgm_bytes, read_raster, write_raster
from .scenes import scene_set, synthetic_scene

__all__ = [
    "MODES",
    "DatasetManifest",
    "ImageRaster",
    "PairDataset",
    "bdsr_bytes",
    "build_pair_stream",
    "default_target",
    "exponential_target",
    "extract_patches",
    "histogram",
    "inverse_cdf",
    "ks_distance",
    "load_patches",
    "parse_bdsr",
    "parse_manifest",
    "parse_pgm",
    "parse_target",
    "pgm_bytes",
    "read_manifest",
    "read_raster",
    "read_target",
    "sar_like_transform",
    "scene_set",
    "synthetic_scene",
    "write_raster",
]
