"""Input checks shared by the estimator and the command line."""
from __future__ import annotations

import numbers

import numpy as np

from .data.raster import ImageRaster
from .exceptions import ConfigurationError, DomainError


def check_image(image, name="image", allow_negative=False):
    """Return ``image`` as a finite 2-D float array, rejecting anything else."""
    values = image.values if isinstance(image, ImageRaster) else image
    values = np.asarray(values)
    if values.dtype.kind not in "biuf":
        raise ConfigurationError(f"{name}: expected numeric pixels, got dtype {values.dtype}")
    if values.ndim != 2 or min(values.shape) < 1:
        raise ConfigurationError(f"{name}: expected a non-empty 2-D array, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{name}: contains NaN or infinite pixels")
    if not allow_negative and np.any(values < 0):
        raise DomainError(f"{name}: intensities must be non-negative")
    if values.dtype.kind != "f":
        values = values.astype(np.float32)
    return values


def check_images(images, name="X"):
    """Accept one 2-D image, a (n, H, W) stack or a sequence of 2-D images."""
    if isinstance(images, ImageRaster):
        return [check_image(images, name)]
    if isinstance(images, np.ndarray):
        if images.ndim == 2:
            return [check_image(images, name)]
        if images.ndim == 3:
            return [check_image(im, f"{name}[{i}]") for i, im in enumerate(images)]
        raise ConfigurationError(f"{name}: expected 2-D or 3-D input, got shape {images.shape}")
    try:
        seq = list(images)
    except TypeError:
        raise ConfigurationError(f"{name}: expected an image or a sequence of images") from None
    if not seq:
        raise ConfigurationError(f"{name}: no images given")
    return [check_image(im, f"{name}[{i}]") for i, im in enumerate(seq)]


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_looks(looks):
    """Normalize a fixed look count or a ``(low, high)`` interval."""
    if isinstance(looks, numbers.Real):
        return float(looks)
    try:
        lo, hi = looks
    except (TypeError, ValueError):
        raise ConfigurationError(f"looks must be a number or a (low, high) pair, got {looks!r}") from None
    return (float(lo), float(hi))
