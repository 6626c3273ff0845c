import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bdss.exceptions import ConfigurationError, DomainError, FormatError
from bdss.metrics import (
    CSV_HEADER,
    PSNR_CAP,
    Region,
    enl,
    epd_roa,
    epd_roa_directional,
    evaluate_image,
    mor,
    parse_regions,
    psnr,
    report_csv,
    ssim,
    tcr,
)
from bdss.speckle import SpeckleSpec, sample_speckle

from oracles import enl_ref, epd_roa_ref, mor_ref, psnr_ref, ssim_ref, tcr_ref

positive = arrays(np.float64, (6, 7), elements=st.floats(0.01, 2.0))


def test_psnr_hand_values():
    a = np.full((4, 4), 0.5)
    assert psnr(a, a) == PSNR_CAP == 99.0
    assert psnr(a, np.full((4, 4), 0.25)) == pytest.approx(12.0412, abs=1e-4)


def test_psnr_errors():
    with pytest.raises(ConfigurationError):
        psnr(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(DomainError):
        psnr(np.zeros(2), np.ones(2), peak=0)


def test_psnr_decreases_along_noise_ladder():
    rng = np.random.default_rng(0)
    a = rng.uniform(0, 1, (32, 32))
    z = rng.standard_normal(a.shape)
    values = [psnr(a, a + s * z) for s in (0.01, 0.02, 0.05, 0.1, 0.3)]
    assert all(x > y for x, y in zip(values, values[1:]))


@settings(max_examples=30, deadline=None)
@given(positive, positive)
def test_psnr_symmetric_and_matches_oracle(a, b):
    assert psnr(a, b) == psnr(b, a)
    assert psnr(a, b) == pytest.approx(psnr_ref(a, b), abs=1e-9)


def test_ssim_identity_and_constants():
    a = np.random.default_rng(1).uniform(0, 1, (16, 16))
    assert ssim(a, a) == 1.0
    c1 = 0.01**2
    assert ssim(np.ones((12, 12)), np.zeros((12, 12))) == pytest.approx(c1 / (1 + c1), rel=1e-12)


def test_ssim_matches_sliding_window_oracle():
    rng = np.random.default_rng(2)
    for _ in range(5):
        a = rng.uniform(0, 1, (15, 17))
        b = np.clip(a + 0.2 * rng.standard_normal(a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(ssim_ref(a, b), abs=1e-9)


def test_ssim_small_image_rejected():
    with pytest.raises(ConfigurationError):
        ssim(np.zeros((10, 10)), np.zeros((10, 10)))


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (12, 12), elements=st.floats(0, 1)), arrays(np.float64, (12, 12), elements=st.floats(0, 1)))
def test_ssim_symmetric_and_bounded(a, b):
    s = ssim(a, b)
    assert s == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1 - 1e-12 <= s <= 1 + 1e-12


def test_enl_hand_value_and_degenerate():
    assert enl(np.array([[1.0, 2.0, 3.0]])) == pytest.approx(4.0)
    with pytest.raises(DomainError, match="degenerate region"):
        enl(np.full((3, 3), 0.4))


@pytest.mark.parametrize("looks", [1, 2, 4, 8])
def test_enl_of_speckled_constant_scene(looks):
    v = 0.3 * sample_speckle((100, 100), SpeckleSpec(float(looks), seed=looks)).values
    assert abs(enl(v) - looks) / looks < 0.05


def test_tcr_cases():
    s = np.random.default_rng(3).uniform(0.1, 1, (5, 5))
    assert tcr(s, s) == 0.0
    s = np.array([[4.0, 0.0], [0.0, 0.0]])  # max/mean = 4
    d = np.array([[1.0, 1.0], [0.0, 0.0]])  # max/mean = 2
    assert tcr(s, d) == pytest.approx(20 * np.log10(2), abs=1e-12)
    with pytest.raises(DomainError):
        tcr(np.zeros((2, 2)), np.ones((2, 2)))


def test_epd_roa_identity_and_scale_invariance():
    s = np.random.default_rng(4).uniform(0.1, 1, (8, 8))
    assert epd_roa(s, s) == 1.0
    assert epd_roa(s, 2 * s) == pytest.approx(1.0, abs=1e-9)
    h, v = epd_roa_directional(s, s)
    assert h == 1.0 and v == 1.0
    with pytest.raises(ConfigurationError):
        epd_roa(np.ones((1, 5)), np.ones((1, 5)))


def test_mor_cases():
    s = np.random.default_rng(5).uniform(0.1, 1, (6, 6))
    assert mor(s, s) == 1.0
    assert mor(s, 1.1 * s) == pytest.approx(1.1, abs=1e-12)
    with pytest.raises(DomainError):
        mor(np.zeros((2, 2)), np.ones((2, 2)))


@settings(max_examples=30, deadline=None)
@given(positive, positive)
def test_region_indexes_match_oracles(s, d):
    assert tcr(s, d) == pytest.approx(tcr_ref(s, d), abs=1e-9)
    assert epd_roa(s, d) == pytest.approx(epd_roa_ref(s, d), abs=1e-9)
    assert mor(s, d) == pytest.approx(mor_ref(s, d), abs=1e-12)
    if np.var(d) > 1e-12:
        assert enl(d) == pytest.approx(enl_ref(d), rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(positive, st.floats(0.1, 10))
def test_no_reference_identity_suite(s, k):
    assert tcr(s, s) == 0.0
    assert epd_roa(s, s) == 1.0
    assert mor(s, s) == 1.0
    assert epd_roa(s, k * s) == pytest.approx(1.0, rel=1e-9)


def test_region_crop_and_bounds():
    img = np.arange(30.0).reshape(5, 6)
    r = Region(1, 2, 3, 2, name="a")
    np.testing.assert_array_equal(r.crop(img), img[2:4, 1:4])
    with pytest.raises(ConfigurationError):
        Region(5, 0, 3, 1).crop(img)
    with pytest.raises(ConfigurationError):
        Region(0, 0, 0, 1)


def test_parse_regions():
    text = "# regions\nsea 0 0 10 10\nship point 20 20 5 5  # target\ncoast edge 3 4 8 8\n"
    regions = parse_regions(text)
    assert [(r.name, r.kind, r.bounds) for r in regions] == [
        ("sea", "region", (0, 0, 10, 10)),
        ("ship", "point", (20, 20, 5, 5)),
        ("coast", "edge", (3, 4, 8, 8)),
    ]
    with pytest.raises(FormatError):
        parse_regions("bad 1 2 3")
    with pytest.raises(FormatError):
        parse_regions("bad 1 2 x 4")


def test_evaluate_identity_suite():
    rng = np.random.default_rng(6)
    s = rng.uniform(0.1, 1, (32, 32))
    regions = [Region(0, 0, 16, 16, "h1"), Region(10, 10, 8, 8, "t1", kind="point")]
    rep = evaluate_image(s, clean=s, speckled=s, regions=regions)
    assert rep.psnr == 99.0 and rep.ssim == 1.0
    assert rep.tcr == {"t1": 0.0}
    assert rep.epd_roa == {"h1": 1.0}
    assert rep.mor == {"h1": 1.0}


def test_evaluate_missing_regions_names_index():
    s = np.ones((16, 16))
    with pytest.raises(ConfigurationError, match="enl"):
        evaluate_image(s, speckled=s, indexes=["enl"])
    with pytest.raises(ConfigurationError, match="tcr"):
        evaluate_image(s, speckled=s, regions=[Region(0, 0, 4, 4)], indexes=["tcr"])
    with pytest.raises(ConfigurationError, match="psnr"):
        evaluate_image(s, indexes=["psnr"])


def test_report_csv_schema_and_determinism():
    rng = np.random.default_rng(7)
    clean = rng.uniform(0.1, 1, (16, 16))
    reports = [
        evaluate_image(clean * 0.9, clean=clean, image="a"),
        evaluate_image(clean * 0.8, clean=clean, image="b"),
    ]
    text = report_csv(reports)
    assert text == report_csv(reports)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[-2].startswith("mean,psnr,,")
    mean = float(lines[-2].split(",")[-1])
    assert mean == pytest.approx((reports[0].psnr + reports[1].psnr) / 2)
