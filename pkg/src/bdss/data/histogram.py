"""SAR-like intensity transform by monotone histogram matching.

Each pixel ``v`` is mapped through ``F_target^-1(F_source(v))`` with both
CDFs tabulated on 256 equal bins over [0, 1]. Source pixels in one bin share
the bin's mid-rank, so the map is monotone and a pixel moves by at most half
a bin when the target equals the source histogram.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from ..exceptions import ConfigurationError, FormatError
from .raster import ImageRaster, as_array

N_BINS = 256
DEFAULT_TARGET_MEAN = 0.115


def exponential_target(mean=DEFAULT_TARGET_MEAN, bins=N_BINS):
    """Bin masses of an exponential intensity law truncated to [0, 1]."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    cdf = 1.0 - np.exp(-edges / mean)
    mass = np.diff(cdf)
    return mass / mass.sum()


def parse_target(text):
    tokens = " ".join(line.split("#", 1)[0] for line in text.splitlines()).split()
    try:
        mass = np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"histogram target: {exc}") from None
    if mass.size != N_BINS:
        raise FormatError(f"histogram target needs {N_BINS} values, got {mass.size}")
    if np.any(mass < 0) or not np.all(np.isfinite(mass)) or mass.sum() <= 0:
        raise FormatError("histogram target masses must be finite, non-negative and not all zero")
    return mass / mass.sum()


def read_target(path):
    with open(path, encoding="utf-8") as fh:
        return parse_target(fh.read())


def default_target():
    """The shipped single-look-like target table."""
    text = resources.files("bdss.data").joinpath("targets/exponential_256.txt").read_text()
    return parse_target(text)


def histogram_bins(values, bins=N_BINS):
    v = np.clip(np.nan_to_num(np.asarray(values, dtype=np.float64)), 0.0, 1.0)
    return np.minimum((v * bins).astype(np.int64), bins - 1)


def histogram(values, bins=N_BINS):
    """Normalized 256-bin mass vector of ``values`` over [0, 1]."""
    counts = np.bincount(histogram_bins(values, bins).ravel(), minlength=bins).astype(np.float64)
    return counts / counts.sum()


def inverse_cdf(mass, q):
    """Smallest ``t`` in [0, 1] where the piecewise-linear target CDF reaches ``q``."""
    mass = np.asarray(mass, dtype=np.float64)
    bins = mass.size
    cum = np.cumsum(mass)
    cum[-1] = 1.0
    q = np.clip(np.asarray(q, dtype=np.float64), 0.0, 1.0)
    j = np.minimum(np.searchsorted(cum, q, side="left"), bins - 1)
    prev = np.where(j > 0, cum[np.maximum(j - 1, 0)], 0.0)
    width = mass[j]
    frac = np.divide(q - prev, width, out=np.zeros_like(q), where=width > 0)
    return (j + np.clip(frac, 0.0, 1.0)) / bins


def sar_like_transform(image, target=None):
    """Match ``image``'s intensity histogram to ``target`` (default table if None).

    A constant image maps every pixel to the target median.
    """
    values = np.asarray(as_array(image))
    if values.ndim != 2 or values.size == 0:
        raise ConfigurationError(f"expected a non-empty 2-D image, got shape {values.shape}")
    mass = default_target() if target is None else np.asarray(target, dtype=np.float64)
    if mass.size != N_BINS:
        raise ConfigurationError(f"target needs {N_BINS} bin masses, got {mass.size}")
    mass = mass / mass.sum()
    idx = histogram_bins(values)
    counts = np.bincount(idx.ravel(), minlength=N_BINS).astype(np.float64)
    n = counts.sum()
    mid_rank = (np.cumsum(counts) - 0.5 * counts) / n
    lut = inverse_cdf(mass, mid_rank)
    out_dtype = values.dtype if values.dtype.kind == "f" else np.float32
    out = lut[idx].astype(out_dtype)
    if isinstance(image, ImageRaster):
        return ImageRaster(out, image.provenance)
    return out


def ks_distance(values, mass):
    """Kolmogorov-Smirnov distance between the 256-bin histogram of ``values`` and ``mass``."""
    mass = np.asarray(mass, dtype=np.float64)
    return float(np.max(np.abs(np.cumsum(histogram(values)) - np.cumsum(mass / mass.sum()))))
