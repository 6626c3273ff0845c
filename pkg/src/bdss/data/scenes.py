"""Synthetic natural-looking scenes for fixtures and desk-scale experiments.

A scene mixes a multi-scale smooth random field (texture and shading) with
a few flat-topped shapes (sharp edges), then is rescaled to [0, 1].
"""
from __future__ import annotations

import numpy as np

from ..speckle import STREAM_DATA, substream


def _smooth_field(rng, h, w, scale):
    noise = rng.standard_normal((h, w))
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    kernel = np.exp(-2.0 * (np.pi * scale) ** 2 * (fx * fx + fy * fy))
    field = np.fft.irfft2(np.fft.rfft2(noise) * kernel, s=(h, w))
    return field / (field.std() + 1e-12)


def synthetic_scene(size=128, seed=0, shapes=6):
    """One ``size`` x ``size`` clean scene in [0, 1] (float32)."""
    h = w = int(size)
    rng = substream(seed, STREAM_DATA, 7919)
    img = 0.6 * _smooth_field(rng, h, w, size / 6.0)
    img += 0.25 * _smooth_field(rng, h, w, size / 24.0)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(shapes):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(0.08, 0.3) * h, rng.uniform(0.08, 0.3) * w
        level = rng.uniform(-1.5, 1.5)
        if rng.random() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        img[mask] = img[mask] * 0.3 + level
    img -= img.min()
    img /= img.max() + 1e-12
    return img.astype(np.float32)


def scene_set(count, size=128, seed=0, sar_like=True, target=None):
    """``count`` independent scenes, optionally mapped to the SAR-like histogram."""
    from .histogram import sar_like_transform

    scenes = []
    for i in range(count):
        img = synthetic_scene(size, seed=seed * 100003 + i)
        if sar_like:
            img = sar_like_transform(img, target)
        scenes.append(img)
    return scenes
