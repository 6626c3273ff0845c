"""Training loops (noisy-target and clean-target) and whole-image inference."""
from __future__ import annotations

import io
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ConfigurationError, TrainingError
from .metrics import psnr
from .network import build_bdss, receptive_field, save_checkpoint
from .numerics import Adam, Tensor, mse, no_grad

log = logging.getLogger(__name__)

MODES = ("self_supervised", "supervised")


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    halve_every: int = 3
    epochs: int = 16
    batch_size: int = 16
    patch: int = 112
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    mode: str = "self_supervised"
    seed: int = 0

    def validate(self):
        for name in ("lr0", "halve_every", "epochs", "batch_size", "patch", "eps"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigurationError("beta1 and beta2 must lie in (0, 1)")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        return self


def lr_schedule(epoch, cfg):
    """Step decay: ``lr0`` halved every ``halve_every`` epochs (epoch is 0-based)."""
    return cfg.lr0 * 0.5 ** (epoch // cfg.halve_every)


def n2n_loss(pred, target):
    """Mean squared error between the network output and its (noisy or clean) target."""
    return mse(pred, target)


@dataclass
class TrainLog:
    losses: list = field(default_factory=list)
    iteration_epochs: list = field(default_factory=list)
    lrs: list = field(default_factory=list)
    val_psnr: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("iteration,epoch,lr,loss\n")
        for i, (epoch, loss) in enumerate(zip(self.iteration_epochs, self.losses)):
            buf.write(f"{i},{epoch},{self.lrs[epoch]!r},{loss!r}\n")
        return buf.getvalue()


def save_trainer_state(path, model, optimizer, epoch, train_log):
    """Snapshot everything needed to resume after ``epoch`` (numpy .npz)."""
    arrays = {f"param{i}": p.data for i, p in enumerate(model.parameters())}
    arrays.update({f"m{i}": m for i, m in enumerate(optimizer.state.first_moment)})
    arrays.update({f"v{i}": v for i, v in enumerate(optimizer.state.second_moment)})
    np.savez(
        path,
        step=optimizer.state.step_count,
        epoch=epoch,
        losses=np.asarray(train_log.losses, dtype=np.float64),
        iteration_epochs=np.asarray(train_log.iteration_epochs, dtype=np.int64),
        lrs=np.asarray(train_log.lrs, dtype=np.float64),
        val_psnr=np.asarray(train_log.val_psnr, dtype=np.float64),
        **arrays,
    )


def _restore(path, model, optimizer, train_log):
    with np.load(path) as z:
        for i, p in enumerate(model.parameters()):
            p.data = z[f"param{i}"].astype(p.data.dtype)
            optimizer.state.first_moment[i] = z[f"m{i}"].copy()
            optimizer.state.second_moment[i] = z[f"v{i}"].copy()
        optimizer.state.step_count = int(z["step"])
        train_log.losses = [float(v) for v in z["losses"]]
        train_log.iteration_epochs = [int(v) for v in z["iteration_epochs"]]
        train_log.lrs = [float(v) for v in z["lrs"]]
        train_log.val_psnr = [float(v) for v in z["val_psnr"]]
        return int(z["epoch"])


def _validation_psnr(model, validation):
    inputs, clean = validation
    scores = [psnr(c, despeckle(model, y)) for y, c in zip(inputs, clean)]
    return float(np.mean(scores))


def train(dataset, model, cfg, validation=None, checkpoint_dir=None, resume=None, progress=None):
    """Fit ``model`` with Adam on ``dataset`` pairs; returns ``(model, TrainLog)``.

    Parameters
    ----------
    dataset : PairDataset
        Yields (y, y') pairs in self-supervised mode, (y, x) in supervised mode.
    model : BDSS
        Updated in place.
    cfg : TrainConfig
    validation : (inputs, clean) sequences, optional
        Scored after each epoch; never used for the updates.
    checkpoint_dir : path, optional
        Receives ``epoch_XXX.bdsm`` and a resumable ``state.npz`` every epoch.
    resume : path to a ``state.npz``, optional
        Continue a previous run from the epoch after the one it recorded.
    progress : callable(epoch, iteration, loss), optional
    """
    cfg.validate()
    if len(dataset) == 0:
        raise ConfigurationError("empty dataset")
    if getattr(dataset, "mode", cfg.mode) != cfg.mode:
        raise ConfigurationError(f"dataset mode {dataset.mode!r} does not match config mode {cfg.mode!r}")
    optimizer = Adam(model.parameters(), cfg.lr0, cfg.beta1, cfg.beta2, cfg.eps)
    train_log = TrainLog()
    start = 0
    if resume is not None:
        start = _restore(resume, model, optimizer, train_log) + 1
    iteration = len(train_log.losses)
    for epoch in range(start, cfg.epochs):
        t0 = time.perf_counter()
        optimizer.lr = lr_schedule(epoch, cfg)
        train_log.lrs.append(optimizer.lr)
        for inputs, targets in dataset.batches(epoch, cfg.batch_size):
            optimizer.zero_grad()
            pred = model.forward(Tensor(inputs, dtype=model.dtype))
            loss = n2n_loss(pred, Tensor(targets, dtype=model.dtype))
            value = float(loss.item())
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at iteration {iteration} (epoch {epoch}, lr {optimizer.lr:g})"
                )
            loss.backward()
            optimizer.step()
            train_log.losses.append(value)
            train_log.iteration_epochs.append(epoch)
            if progress is not None:
                progress(epoch, iteration, value)
            iteration += 1
        if validation is not None:
            train_log.val_psnr.append(_validation_psnr(model, validation))
        train_log.epoch_seconds.append(time.perf_counter() - t0)
        log.info("epoch %d lr %g mean loss %.6g", epoch, optimizer.lr, np.mean(train_log.losses[-1:]))
        if checkpoint_dir is not None:
            save_checkpoint(model, os.path.join(checkpoint_dir, f"epoch_{epoch:03d}.bdsm"))
            save_trainer_state(os.path.join(checkpoint_dir, "state.npz"), model, optimizer, epoch, train_log)
    return model, train_log


def train_config_dict(cfg):
    return asdict(cfg)


def _forward_image(model, image):
    with no_grad():
        out = model.forward(Tensor(image[None, None], dtype=model.dtype))
    return out.data[0, 0]


def despeckle(model, image, tile=256):
    """Apply the network to a whole raster, tiling when it exceeds ``tile``.

    Tiles overlap by half the receptive field and only their centres are
    kept, so every output pixel sees the same context as an untiled pass.
    """
    image = np.asarray(getattr(image, "values", image))
    if image.ndim != 2 or min(image.shape) < 1:
        raise ConfigurationError(f"expected a non-empty 2-D raster, got shape {image.shape}")
    h, w = image.shape
    if h <= tile and w <= tile:
        return _forward_image(model, image)
    margin = receptive_field(model) // 2
    core = tile - 2 * margin
    if core < 1:
        raise ConfigurationError(f"tile {tile} too small for receptive-field margin {margin}")
    out = np.empty((h, w), dtype=model.dtype)
    for r0 in range(0, h, core):
        r1 = min(r0 + core, h)
        ir0, ir1 = max(r0 - margin, 0), min(r1 + margin, h)
        for c0 in range(0, w, core):
            c1 = min(c0 + core, w)
            ic0, ic1 = max(c0 - margin, 0), min(c1 + margin, w)
            block = _forward_image(model, image[ir0:ir1, ic0:ic1])
            out[r0:r1, c0:c1] = block[r0 - ir0 : r1 - ir0, c0 - ic0 : c1 - ic0]
    return out


def fresh_model(model_config, seed, dtype=np.float32):
    return build_bdss(model_config, seed=seed, dtype=dtype)
