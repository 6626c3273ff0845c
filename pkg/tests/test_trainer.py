import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bdss.data import PairDataset
from bdss.exceptions import ConfigurationError, TrainingError
from bdss.network import ModelConfig, build_bdss, checkpoint_bytes, forward
from bdss.numerics import Tensor
from bdss.speckle import SpeckleSpec, speckle_realization
from bdss.trainer import TrainConfig, TrainLog, despeckle, lr_schedule, n2n_loss, train

SMALL = ModelConfig(scale_factor=16)


def small_cfg(**kw):
    base = dict(epochs=2, halve_every=1, batch_size=4, patch=16, lr0=1e-3)
    base.update(kw)
    return TrainConfig(**base)


def constant_dataset(n=8, value=0.5, size=16, looks=1.0, mode="self_supervised", seed=0):
    patches = [np.full((size, size), value, dtype=np.float32) for _ in range(n)]
    return PairDataset(patches, SpeckleSpec(looks, seed=seed), mode)


def test_lr_schedule_values():
    cfg = TrainConfig()
    assert lr_schedule(0, cfg) == 0.001 and lr_schedule(2, cfg) == 0.001
    assert lr_schedule(3, cfg) == 0.0005 and lr_schedule(6, cfg) == 0.00025
    assert lr_schedule(10, TrainConfig(lr0=1.0, halve_every=1)) == 2.0**-10


@given(st.integers(1, 6), st.integers(0, 40))
def test_lr_schedule_piecewise_constant_non_increasing(period, epoch):
    cfg = TrainConfig(halve_every=period)
    assert lr_schedule(epoch + 1, cfg) <= lr_schedule(epoch, cfg)
    start = (epoch // period) * period
    assert lr_schedule(epoch, cfg) == lr_schedule(start, cfg)


@pytest.mark.parametrize(
    "field,value",
    [("lr0", 0.0), ("epochs", 0), ("batch_size", -1), ("mode", "noisy"), ("beta1", 1.0)],
)
def test_train_config_validation(field, value):
    with pytest.raises(ConfigurationError):
        TrainConfig(**{field: value}).validate()


def test_n2n_loss_cases():
    rng = np.random.default_rng(0)
    p, t = rng.standard_normal((2, 1, 5, 5)), rng.standard_normal((2, 1, 5, 5))
    assert n2n_loss(Tensor(p), Tensor(p)).item() == 0.0
    assert n2n_loss(Tensor(p + 0.3), Tensor(p)).item() == pytest.approx(0.09, abs=1e-12)
    diff = (p - t).ravel()
    total = 0.0
    for d in diff:
        total += d * d
    assert n2n_loss(Tensor(p), Tensor(t)).item() == pytest.approx(total / diff.size, abs=1e-12)
    with pytest.raises(ConfigurationError):
        n2n_loss(Tensor(p), Tensor(t[:1]))


def test_loss_decreases():
    ds = constant_dataset(n=16)
    model = build_bdss(SMALL, seed=0)
    _, log = train(ds, model, small_cfg(epochs=50, halve_every=100))
    assert len(log.losses) == 200
    assert np.mean(log.losses[-50:]) < np.mean(log.losses[:50])


def test_noisy_targets_recover_constant_scene():
    # The L2 minimiser under unit-mean noisy targets is the clean value.
    ds = constant_dataset(n=32, value=0.4)
    model = build_bdss(SMALL, seed=1)
    train(ds, model, small_cfg(epochs=40, halve_every=15, batch_size=8, lr0=2e-3))
    x = np.full((32, 32), 0.4, dtype=np.float32)
    y, _ = speckle_realization(x, SpeckleSpec(1.0, seed=77), 0)
    out = despeckle(model, y)
    assert abs(out.mean() - 0.4) < 0.04
    assert np.median(np.abs(out - 0.4)) < 0.04


def test_log_shape_and_csv():
    ds = constant_dataset(n=6)
    _, log = train(ds, build_bdss(SMALL, seed=0), small_cfg(epochs=3))
    assert isinstance(log, TrainLog)
    assert len(log.lrs) == 3 and len(log.epoch_seconds) == 3
    assert len(log.losses) == 3 * 2  # 6 patches, batch 4, partial batch kept
    lines = log.to_csv().splitlines()
    assert lines[0] == "iteration,epoch,lr,loss"
    assert len(lines) == 7
    assert lines[-1].startswith("5,2,0.00025,")


def test_validation_psnr_is_recorded():
    ds = constant_dataset(n=4)
    clean = [np.full((16, 16), 0.5, dtype=np.float32)]
    noisy = [speckle_realization(clean[0], SpeckleSpec(4.0), 0)[0]]
    _, log = train(ds, build_bdss(SMALL, seed=0), small_cfg(), validation=(noisy, clean))
    assert len(log.val_psnr) == 2 and all(np.isfinite(log.val_psnr))


def test_training_is_deterministic(tmp_path):
    blobs = []
    for run in range(2):
        ds = constant_dataset(n=6, looks=(1.0, 10.0))
        model, _ = train(ds, build_bdss(SMALL, seed=3), small_cfg(), checkpoint_dir=tmp_path)
        blobs.append(checkpoint_bytes(model))
        assert (tmp_path / "epoch_001.bdsm").read_bytes() == blobs[-1]
    assert blobs[0] == blobs[1]


def test_resume_continues_deterministically(tmp_path):
    cfg = small_cfg(epochs=4)
    straight, straight_log = train(constant_dataset(n=6), build_bdss(SMALL, seed=3), cfg)
    partial = small_cfg(epochs=2)
    train(constant_dataset(n=6), build_bdss(SMALL, seed=3), partial, checkpoint_dir=tmp_path)
    resumed, resumed_log = train(
        constant_dataset(n=6), build_bdss(SMALL, seed=99), cfg, resume=tmp_path / "state.npz"
    )
    assert checkpoint_bytes(resumed) == checkpoint_bytes(straight)
    assert resumed_log.losses == straight_log.losses


def test_dataset_not_mutated():
    ds = constant_dataset(n=4)
    before = [p.copy() for p in ds.patches]
    train(ds, build_bdss(SMALL, seed=0), small_cfg())
    assert all(np.array_equal(a, b) for a, b in zip(before, ds.patches))


def test_nan_loss_aborts_with_iteration_and_lr():
    ds = constant_dataset(n=4)
    model = build_bdss(SMALL, seed=0)
    model.reconstruction.bias.data[...] = np.nan
    with pytest.raises(TrainingError, match=r"iteration 0 .*lr 0\.001"):
        train(ds, model, small_cfg())


def test_mode_mismatch_rejected():
    with pytest.raises(ConfigurationError):
        train(constant_dataset(mode="supervised"), build_bdss(SMALL), small_cfg())


def test_empty_dataset_rejected():
    class Empty:
        mode = "self_supervised"

        def __len__(self):
            return 0

    with pytest.raises(ConfigurationError, match="empty"):
        train(Empty(), build_bdss(SMALL), small_cfg())


# -- inference -----------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_model():
    return build_bdss(ModelConfig.desk(), seed=5)


def test_despeckle_small_image_is_single_pass(desk_model):
    y = np.random.default_rng(0).uniform(0, 1, (112, 112)).astype(np.float32)
    out = despeckle(desk_model, y)
    assert out.shape == (112, 112)
    np.testing.assert_array_equal(out, forward(desk_model, y[None, None]).data[0, 0])


def test_tiled_matches_untiled_600(desk_model):
    y = np.random.default_rng(1).gamma(1.0, 0.3, (600, 600)).astype(np.float32)
    tiled = despeckle(desk_model, y, tile=256)
    whole = despeckle(desk_model, y, tile=600)
    assert tiled.shape == (600, 600)
    assert np.max(np.abs(tiled - whole)) <= 1e-5


def test_constant_zero_input_gives_constant_output(desk_model):
    out = despeckle(desk_model, np.zeros((40, 40), dtype=np.float32))
    assert np.all(np.isfinite(out))
    interior = out[20:21, 20:21]
    assert np.all(interior == interior.flat[0])


def test_despeckle_rejects_empty(desk_model):
    with pytest.raises(ConfigurationError):
        despeckle(desk_model, np.zeros((0, 5)))
    with pytest.raises(ConfigurationError):
        despeckle(desk_model, np.zeros((300, 300)), tile=100)
