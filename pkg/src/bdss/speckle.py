"""Multiplicative Gamma speckle: sampling, degradation and training pairs.

Fully developed speckle of an ``L``-look intensity image is modelled as
``y = n * x`` where ``n`` is Gamma distributed with shape ``L`` and rate
``L`` (unit mean, variance ``1/L``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DomainError

# Named substreams hanging off one master seed.
STREAM_NOISE = 0
STREAM_INIT = 1
STREAM_DATA = 2


def substream(seed, *keys):
    """Independent ``numpy.random.Generator`` for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SpeckleSpec:
    """Number-of-looks setting and seed for speckle synthesis.

    ``looks`` is either a single value ``L >= 1`` or an interval
    ``(L_min, L_max)`` from which each realization draws its own ``L``.
    """

    looks: object = (1.0, 10.0)
    seed: int = 0

    def __post_init__(self):
        if np.ndim(self.looks) == 0:
            lo = hi = float(self.looks)
            object.__setattr__(self, "looks", lo)
        else:
            if len(self.looks) != 2:
                raise ConfigurationError(f"looks interval needs two bounds, got {self.looks!r}")
            lo, hi = (float(v) for v in self.looks)
            object.__setattr__(self, "looks", (lo, hi))
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise DomainError(f"looks must be finite, got {self.looks!r}")
        if lo < 1:
            raise DomainError(f"number of looks must be >= 1, got {lo}")
        if hi < lo:
            raise ConfigurationError(f"empty looks interval [{lo}, {hi}]")

    @property
    def is_interval(self):
        return isinstance(self.looks, tuple)

    @property
    def bounds(self):
        return self.looks if self.is_interval else (self.looks, self.looks)


@dataclass
class NoiseField:
    values: np.ndarray
    looks_used: float


def sample_looks(spec, rng=None):
    """Draw a number of looks uniformly from ``spec``'s interval.

    A fixed-L spec returns its value without consuming randomness.
    """
    if not spec.is_interval:
        return spec.looks
    if rng is None:
        rng = substream(spec.seed, STREAM_NOISE)
    lo, hi = spec.looks
    return float(rng.uniform(lo, hi))


def gamma_unit_mean(looks, size, rng):
    """Gamma(shape=looks, rate=looks) draws by Marsaglia-Tsang squeeze/rejection.

    Valid for ``looks >= 1``; every shape, integer or not, takes this path.
    """
    if looks < 1:
        raise DomainError(f"number of looks must be >= 1, got {looks}")
    d = looks - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    total = int(np.prod(size, dtype=np.int64))
    out = np.empty(total, dtype=np.float64)
    filled = 0
    while filled < total:
        need = total - filled
        # ~2% rejections at shape 1, fewer above; oversample to finish in one pass.
        batch = need + need // 16 + 16
        z = rng.standard_normal(batch)
        u = rng.random(batch)
        v = (1.0 + c * z) ** 3
        ok = v > 0
        z2 = z * z
        squeeze = u < 1.0 - 0.0331 * z2 * z2
        with np.errstate(invalid="ignore", divide="ignore"):
            full = np.log(u) < 0.5 * z2 + d * (1.0 - v + np.log(np.where(ok, v, 1.0)))
        accepted = (d * v)[ok & (squeeze | full)][:need]
        out[filled : filled + accepted.size] = accepted
        filled += accepted.size
    return (out / looks).reshape(size)


def sample_speckle(shape, spec, rng=None):
    """Unit-mean Gamma speckle field of the given shape.

    Deterministic given ``spec.seed`` when ``rng`` is not supplied.
    """
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if not shape or any(s < 1 for s in shape):
        raise ConfigurationError(f"speckle shape must be non-empty, got {shape}")
    if rng is None:
        rng = substream(spec.seed, STREAM_NOISE)
    looks = sample_looks(spec, rng)
    return NoiseField(gamma_unit_mean(looks, shape, rng), looks)


def apply_speckle(x, noise):
    """Degrade intensity image ``x`` by multiplicative noise (no clipping)."""
    x = np.asarray(x)
    values = noise.values if isinstance(noise, NoiseField) else np.asarray(noise)
    if x.shape != values.shape:
        raise ConfigurationError(f"image shape {x.shape} != noise shape {values.shape}")
    if np.any(x < 0):
        raise DomainError("intensity image has negative entries")
    return x * values


def speckle_realization(x, spec, *keys):
    """One speckled copy of ``x`` drawn from the substream ``(spec.seed, *keys)``.

    Returns the speckled image and the realized number of looks.
    """
    x = np.asarray(x)
    rng = substream(spec.seed, STREAM_NOISE, *keys)
    noise = sample_speckle(x.shape, spec, rng)
    y = apply_speckle(x, noise).astype(x.dtype if x.dtype.kind == "f" else np.float64, copy=False)
    return y, noise.looks_used


def make_training_pair(x, spec, index=0, epoch=0, return_looks=False):
    """Two independent speckle realizations ``(y, y_prime)`` of clean image ``x``.

    ``y`` comes from substream ``(index, epoch, 0)`` and ``y_prime`` from
    ``(index, epoch, 1)``; with an interval spec each draws its own L.
    """
    y, ly = speckle_realization(x, spec, index, epoch, 0)
    y_prime, lyp = speckle_realization(x, spec, index, epoch, 1)
    if return_looks:
        return y, y_prime, (ly, lyp)
    return y, y_prime
