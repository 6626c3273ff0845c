"""scikit-learn style wrapper around simulation, training and inference."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import PairDataset, extract_patches
from .metrics import psnr
from .network import ModelConfig, build_bdss
from .speckle import SpeckleSpec
from .trainer import TrainConfig, despeckle, train
from .validation import check_images, check_looks, check_positive_int


class BDSSDespeckler(TransformerMixin, BaseEstimator):
    """Blind despeckler trained from clean images by simulated speckle pairs.

    ``fit`` cuts the clean images into patches, draws speckle with ``looks``
    (a fixed count or an interval sampled per pair) and trains a dilated
    dense network either on noisy targets (``mode='self_supervised'``) or on
    the clean patches (``mode='supervised'``). ``transform`` despeckles
    already speckled images.

    Parameters
    ----------
    scale_factor : int
        Divides every channel width of the full-size network.
    looks : float or (float, float)
    mode : {'self_supervised', 'supervised'}
    epochs, halve_every, batch_size, lr0 : training schedule.
    patch, stride : patch extraction on the training images.
    tile : int
        Largest side processed in a single forward pass at inference.
    seed : int
        Master seed for initialization, noise and data order.
    """

    def __init__(
        self,
        scale_factor=8,
        looks=(1.0, 10.0),
        mode="self_supervised",
        epochs=16,
        halve_every=3,
        batch_size=16,
        lr0=1e-3,
        patch=32,
        stride=None,
        tile=256,
        seed=0,
    ):
        self.scale_factor = scale_factor
        self.looks = looks
        self.mode = mode
        self.epochs = epochs
        self.halve_every = halve_every
        self.batch_size = batch_size
        self.lr0 = lr0
        self.patch = patch
        self.stride = stride
        self.tile = tile
        self.seed = seed

    def _train_config(self):
        return TrainConfig(
            lr0=self.lr0,
            halve_every=check_positive_int(self.halve_every, "halve_every"),
            epochs=check_positive_int(self.epochs, "epochs"),
            batch_size=check_positive_int(self.batch_size, "batch_size"),
            patch=check_positive_int(self.patch, "patch"),
            mode=self.mode,
            seed=self.seed,
        ).validate()

    def fit(self, X, y=None):
        """Train on clean images ``X``; ``y`` is ignored."""
        images = check_images(X)
        cfg = self._train_config()
        spec = SpeckleSpec(check_looks(self.looks), seed=self.seed)
        patches = [p for im in images for p in extract_patches(im, cfg.patch, self.stride)]
        dataset = PairDataset(patches, spec, cfg.mode, shuffle_seed=self.seed)
        model = build_bdss(ModelConfig(scale_factor=self.scale_factor), seed=self.seed)
        self.model_, self.train_log_ = train(dataset, model, cfg)
        self.n_patches_ = len(patches)
        return self

    def transform(self, X):
        """Despeckle each image; returns a list, or one array for a single 2-D input."""
        check_is_fitted(self, "model_")
        single = np.ndim(X) == 2
        out = [despeckle(self.model_, im, tile=self.tile) for im in check_images(X)]
        return out[0] if single else out

    def predict(self, X):
        return self.transform(X)

    def score(self, X, y):
        """Mean PSNR (dB) of the despeckled ``X`` against the clean ``y``."""
        pred = self.transform(X)
        if np.ndim(X) == 2:
            pred, y = [pred], [y]
        clean = check_images(y, "y")
        return float(np.mean([psnr(c, p) for c, p in zip(clean, pred)]))
