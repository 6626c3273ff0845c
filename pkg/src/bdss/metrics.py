"""Full-reference and no-reference despeckling quality indexes.

Full-reference: :func:`psnr`, :func:`ssim` (need the clean image).
No-reference, computed on regions of the speckled/despeckled pair:
:func:`enl`, :func:`tcr`, :func:`epd_roa`, :func:`mor`.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, DomainError, FormatError

PSNR_CAP = 99.0
EPS = 1e-12

FULL_REFERENCE = ("psnr", "ssim")
NO_REFERENCE = ("enl", "tcr", "epd_roa", "mor")
REGION_KINDS = ("region", "edge", "point")
CSV_HEADER = ("image", "index", "region", "value")


@dataclass(frozen=True)
class Region:
    """Axis-aligned pixel rectangle; ``kind`` selects which indexes use it."""

    x0: int
    y0: int
    width: int
    height: int
    name: str = ""
    kind: str = "region"

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.x0 < 0 or self.y0 < 0:
            raise ConfigurationError(f"region {self.name or '?'}: invalid rectangle {self.bounds}")
        if self.kind not in REGION_KINDS:
            raise ConfigurationError(f"region {self.name or '?'}: unknown kind {self.kind!r}")

    @property
    def bounds(self):
        return (self.x0, self.y0, self.width, self.height)

    @property
    def area(self):
        return self.width * self.height

    def crop(self, image):
        image = np.asarray(image, dtype=np.float64)
        h, w = image.shape[-2:]
        if self.x0 + self.width > w or self.y0 + self.height > h:
            raise ConfigurationError(
                f"region {self.name or '?'} {self.bounds} exceeds the {w}x{h} image"
            )
        return image[..., self.y0 : self.y0 + self.height, self.x0 : self.x0 + self.width]


def _region_pair(speckled, despeckled, region):
    s = region.crop(speckled) if region is not None else np.asarray(speckled, dtype=np.float64)
    d = region.crop(despeckled) if region is not None else np.asarray(despeckled, dtype=np.float64)
    if s.shape != d.shape:
        raise ConfigurationError(f"speckled {s.shape} and despeckled {d.shape} regions differ")
    return s, d


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigurationError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(reference, test, peak=1.0):
    """Peak signal-to-noise ratio in dB; identical inputs give ``PSNR_CAP``."""
    if peak <= 0:
        raise DomainError(f"peak must be positive, got {peak}")
    a, b = _same_shape(reference, test)
    err = np.mean((a - b) ** 2)
    if err == 0:
        return PSNR_CAP
    return float(10.0 * np.log10(peak * peak / err))


def gaussian_window(size=11, sigma=1.5):
    t = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(image, taps):
    # Separable correlation, 'valid' extent.
    n = taps.size
    h, w = image.shape
    rows = np.zeros((h - n + 1, w))
    for t in range(n):
        rows += taps[t] * image[t : t + h - n + 1]
    out = np.zeros((h - n + 1, w - n + 1))
    for t in range(n):
        out += taps[t] * rows[:, t : t + w - n + 1]
    return out


def ssim_map(reference, test, peak=1.0, window=11, sigma=1.5, k1=0.01, k2=0.03):
    a, b = _same_shape(reference, test)
    if a.ndim != 2:
        raise ConfigurationError(f"ssim expects a 2-D image, got shape {a.shape}")
    if min(a.shape) < window:
        raise ConfigurationError(f"image {a.shape} is smaller than the {window}x{window} window")
    taps = gaussian_window(window, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    mu_a = _filter_valid(a, taps)
    mu_b = _filter_valid(b, taps)
    var_a = _filter_valid(a * a, taps) - mu_a * mu_a
    var_b = _filter_valid(b * b, taps) - mu_b * mu_b
    cov = _filter_valid(a * b, taps) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(reference, test, peak=1.0):
    """Mean local SSIM with an 11x11 Gaussian window (sigma 1.5, K1 0.01, K2 0.03)."""
    return float(np.mean(ssim_map(reference, test, peak)))


def enl(image, region=None):
    """Equivalent number of looks ``mean**2 / var`` with the N-1 sample variance."""
    v = region.crop(image) if region is not None else np.asarray(image, dtype=np.float64)
    if v.size < 2:
        raise ConfigurationError("ENL needs a region of at least two pixels")
    var = np.var(v, ddof=1)
    if var == 0:
        label = f" {region.name}" if region is not None and region.name else ""
        raise DomainError(f"degenerate region{label}: zero variance")
    return float(np.mean(v) ** 2 / var)


def tcr(speckled, despeckled, patch=None):
    """Absolute change in dB of the max/mean ratio over a point-target patch."""
    s, d = _region_pair(speckled, despeckled, patch)
    ms, md = s.mean(), d.mean()
    if ms <= 0 or md <= 0:
        raise DomainError("TCR needs positive patch means")
    return float(abs(20.0 * np.log10(d.max() / md) - 20.0 * np.log10(s.max() / ms)))


def _hv_ratio_sum(v):
    # For each pixel with a right and lower neighbour: |(I/I_right) / (I/I_below)|.
    centre = v[:-1, :-1]
    horizontal = centre / (v[:-1, 1:] + EPS)
    vertical = centre / (v[1:, :-1] + EPS)
    return np.sum(np.abs(horizontal / (vertical + EPS)))


def epd_roa(speckled, despeckled, region=None):
    """Edge-preservation degree from adjacent-pixel ratios; 1 is ideal.

    Sum over the region of ``|E_H / E_V|`` for the despeckled image divided
    by the same sum for the speckled image, where ``E_H`` and ``E_V`` are
    ratios of horizontally and vertically adjacent pixels.
    """
    s, d = _region_pair(speckled, despeckled, region)
    if min(s.shape) < 2:
        raise ConfigurationError("EPD-ROA needs a region of at least 2x2 pixels")
    return float(_hv_ratio_sum(d) / _hv_ratio_sum(s))


def epd_roa_directional(speckled, despeckled, region=None):
    """Per-direction variant: ``(horizontal, vertical)`` ratio-of-sums indexes."""
    s, d = _region_pair(speckled, despeckled, region)
    if min(s.shape) < 2:
        raise ConfigurationError("EPD-ROA needs a region of at least 2x2 pixels")

    def sums(v):
        h = np.sum(np.abs(v[:, :-1] / (v[:, 1:] + EPS)))
        vv = np.sum(np.abs(v[:-1, :] / (v[1:, :] + EPS)))
        return h, vv

    dh, dv = sums(d)
    sh, sv = sums(s)
    return float(dh / sh), float(dv / sv)


def mor(speckled, despeckled, region=None):
    """Mean of ratio: despeckled region mean over speckled region mean."""
    s, d = _region_pair(speckled, despeckled, region)
    ms = s.mean()
    if ms == 0:
        raise DomainError("MOR undefined: speckled region mean is zero")
    return float(d.mean() / ms)


# -- region spec files and reports ------------------------------------------


def parse_regions(text):
    """Parse ``name [kind] x0 y0 w h`` lines (kind: region, edge or point)."""
    regions = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) == 5:
            name, kind, nums = parts[0], "region", parts[1:]
        elif len(parts) == 6:
            name, kind, nums = parts[0], parts[1], parts[2:]
        else:
            raise FormatError(f"line {lineno}: expected 'name [kind] x0 y0 w h', got {raw!r}")
        try:
            x0, y0, w, h = (int(n) for n in nums)
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer coordinates in {raw!r}") from None
        regions.append(Region(x0, y0, w, h, name=name, kind=kind))
    return regions


def read_regions(path):
    with open(path, encoding="utf-8") as fh:
        return parse_regions(fh.read())


@dataclass
class MetricReport:
    image: str = ""
    psnr: float = None
    ssim: float = None
    enl: dict = field(default_factory=dict)
    tcr: dict = field(default_factory=dict)
    epd_roa: dict = field(default_factory=dict)
    mor: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def rows(self):
        out = []
        if self.psnr is not None:
            out.append((self.image, "psnr", "", self.psnr))
        if self.ssim is not None:
            out.append((self.image, "ssim", "", self.ssim))
        for index in NO_REFERENCE:
            for region, value in getattr(self, index).items():
                out.append((self.image, index, region, value))
        return out


def evaluate_image(
    despeckled,
    clean=None,
    speckled=None,
    regions=(),
    indexes=None,
    image="",
    peak=1.0,
):
    """Compute every requested index that the supplied inputs allow.

    ``indexes=None`` means "all applicable". Naming a no-reference index
    explicitly without the regions it needs is an error.
    """
    explicit = indexes is not None
    indexes = tuple(indexes) if explicit else FULL_REFERENCE + NO_REFERENCE
    unknown = set(indexes) - set(FULL_REFERENCE + NO_REFERENCE)
    if unknown:
        raise ConfigurationError(f"unknown index(es): {', '.join(sorted(unknown))}")
    report = MetricReport(image=image)
    area = [r for r in regions if r.kind == "region"]
    edges = [r for r in regions if r.kind in ("region", "edge")]
    targets = [r for r in regions if r.kind == "point"]
    needs = {"enl": area, "mor": area, "epd_roa": edges, "tcr": targets}
    for index in indexes:
        if index in FULL_REFERENCE:
            if clean is None:
                if explicit:
                    raise ConfigurationError(f"{index} needs a clean reference image")
                continue
            value = psnr(clean, despeckled, peak) if index == "psnr" else ssim(clean, despeckled, peak)
            setattr(report, index, value)
            continue
        if not needs[index] or (speckled is None and index != "enl"):
            if explicit:
                what = "region" if index != "tcr" else "point-target"
                raise ConfigurationError(f"{index} needs a {what} spec and the speckled image")
            continue
        for r in needs[index]:
            if index == "enl":
                value = enl(despeckled, r)
            elif index == "mor":
                value = mor(speckled, despeckled, r)
            elif index == "epd_roa":
                value = epd_roa(speckled, despeckled, r)
            else:
                value = tcr(speckled, despeckled, r)
            getattr(report, index)[r.name] = value
    return report


def format_value(value):
    return repr(float(value))


def report_csv(reports):
    """CSV text: one row per (image, index, region) plus per-index ``mean`` rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    collected = {}
    for report in reports:
        for image, index, region, value in report.rows():
            writer.writerow((image, index, region, format_value(value)))
            if math.isfinite(value):
                collected.setdefault(index, []).append(value)
    for index in FULL_REFERENCE + NO_REFERENCE:
        if index in collected:
            writer.writerow(("mean", index, "", format_value(np.mean(collected[index]))))
    return buf.getvalue()
