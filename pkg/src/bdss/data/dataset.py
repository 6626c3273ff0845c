"""Patch extraction, manifests and deterministic training-pair streams."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigurationError
from ..speckle import STREAM_DATA, make_training_pair, speckle_realization, substream
from .raster import as_array, read_raster

log = logging.getLogger(__name__)

MODES = ("self_supervised", "supervised")


def grid_positions(height, width, patch, stride):
    if patch < 1 or stride < 1:
        raise ConfigurationError(f"patch ({patch}) and stride ({stride}) must be positive")
    if patch > height or patch > width:
        raise ConfigurationError(f"patch {patch} exceeds the {width}x{height} image")
    rows = range(0, height - patch + 1, stride)
    cols = range(0, width - patch + 1, stride)
    return [(r, c) for r in rows for c in cols]


def extract_patches(image, patch, stride=None, seed=None):
    """Square patches on a regular grid (remainder dropped), shuffled when ``seed`` is given."""
    values = as_array(image)
    stride = patch if stride is None else stride
    positions = grid_positions(values.shape[0], values.shape[1], patch, stride)
    if seed is not None:
        order = substream(seed, STREAM_DATA).permutation(len(positions))
        positions = [positions[i] for i in order]
    return [values[r : r + patch, c : c + patch].copy() for r, c in positions]


@dataclass
class DatasetManifest:
    """Image list plus patching parameters; ``regions`` holds optional region-spec paths."""

    paths: list
    regions: list = field(default_factory=list)
    patch: int = 32
    stride: int = 32
    seed: int = 0

    def __post_init__(self):
        if not self.regions:
            self.regions = [None] * len(self.paths)


def parse_manifest(text, base_dir="."):
    paths, regions = [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        paths.append(os.path.join(base_dir, parts[0]))
        regions.append(os.path.join(base_dir, parts[1]) if len(parts) > 1 else None)
    return paths, regions


def read_manifest(path, patch=32, stride=None, seed=0):
    with open(path, encoding="utf-8") as fh:
        paths, regions = parse_manifest(fh.read(), os.path.dirname(os.path.abspath(path)))
    return DatasetManifest(paths, regions, patch, patch if stride is None else stride, seed)


def load_patches(manifest):
    """Read every manifest image and cut it into patches (grid order).

    Unreadable images are skipped with a warning; if none can be read the
    manifest is rejected.
    """
    patches = []
    readable = 0
    for path in manifest.paths:
        try:
            image = read_raster(path).values
        except (OSError, ValueError) as exc:
            log.warning("skipping unreadable image %s: %s", path, exc)
            continue
        readable += 1
        patches.extend(extract_patches(image, manifest.patch, manifest.stride))
    if not manifest.paths or readable == 0:
        raise ConfigurationError("manifest has no readable images")
    return patches


class PairDataset:
    """Indexable source of (input, target) training pairs over fixed clean patches.

    Parameters
    ----------
    patches : sequence of 2-D arrays
        Clean patches, all the same size.
    speckle : SpeckleSpec
        Looks setting and noise seed.
    mode : {'self_supervised', 'supervised'}
        Target is a second speckle realization or the clean patch. The input
        ``y`` is identical in both modes for the same (index, epoch).
    fresh_noise : bool
        Draw new speckle every epoch (default) or reuse epoch 0's noise.
    """

    def __init__(self, patches, speckle, mode="self_supervised", fresh_noise=True, shuffle_seed=0):
        if mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
        self.patches = [np.asarray(p, dtype=np.float32) for p in patches]
        if not self.patches:
            raise ConfigurationError("empty dataset")
        shape = self.patches[0].shape
        if any(p.shape != shape for p in self.patches):
            raise ConfigurationError("all patches must share one shape")
        self.speckle = speckle
        self.mode = mode
        self.fresh_noise = fresh_noise
        self.shuffle_seed = shuffle_seed

    def __len__(self):
        return len(self.patches)

    def pair(self, index, epoch=0):
        x = self.patches[index]
        noise_epoch = epoch if self.fresh_noise else 0
        if self.mode == "self_supervised":
            return make_training_pair(x, self.speckle, index, noise_epoch)
        y, _ = speckle_realization(x, self.speckle, index, noise_epoch, 0)
        return y, x

    def order(self, epoch):
        return substream(self.shuffle_seed, STREAM_DATA, epoch).permutation(len(self))

    def batches(self, epoch, batch_size):
        """Yield ``(inputs, targets)`` arrays of shape (B, 1, P, P) for one epoch."""
        order = self.order(epoch)
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            pairs = [self.pair(int(i), epoch) for i in idx]
            inputs = np.stack([p[0] for p in pairs])[:, None].astype(np.float32)
            targets = np.stack([p[1] for p in pairs])[:, None].astype(np.float32)
            yield inputs, targets


def build_pair_stream(manifest, speckle, mode="self_supervised", epoch=0, fresh_noise=True):
    """Iterate the training pairs of one epoch in the manifest's shuffled order."""
    dataset = PairDataset(load_patches(manifest), speckle, mode, fresh_noise, manifest.seed)
    for i in dataset.order(epoch):
        yield dataset.pair(int(i), epoch)
