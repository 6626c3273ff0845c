"""Dense dilated despeckling network.

Layer graph (widths at full scale)::

    input(1) -> LowLevel conv3x3 + PReLU (128)
             -> DenseBlock-A (128) -> concat with LowLevel (256)
             -> DenseBlock-B (128) -> concat (384)
             -> DenseBlock-C (128) -> concat (512)
             -> Bottleneck conv1x1 (256) -> Reconstruction conv3x3 (1)

Inside a dense block, layer 1 reads the block input, layer 2 reads layer 1,
and every later layer reads the PReLU-activated concatenation of all
previous layer outputs. The block emits that concatenation over all eight
layers.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ..exceptions import ConfigurationError
from ..numerics import Tensor, concat_channels, conv2d, field_of_view, prelu
from ..speckle import STREAM_INIT, substream

DEFAULT_DILATIONS = (1, 2, 3, 4, 4, 3, 2, 1)
PRELU_INIT = 0.25
BLOCK_NAMES = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class DenseBlockConfig:
    growth: int = 16
    layer_dilations: tuple = DEFAULT_DILATIONS
    kernel: int = 3

    def __post_init__(self):
        object.__setattr__(self, "layer_dilations", tuple(int(d) for d in self.layer_dilations))

    @property
    def n_layers(self):
        return len(self.layer_dilations)

    @property
    def out_channels(self):
        return self.growth * self.n_layers


@dataclass(frozen=True)
class ModelConfig:
    """Widths of the network before division by ``scale_factor``.

    ``scale_factor`` divides every channel count (not the depth or the
    dilation pattern); ``scale_factor=8`` gives the 16/2/32 desk model.
    """

    lowlevel_channels: int = 128
    blocks: tuple = field(default_factory=lambda: (DenseBlockConfig(),) * 3)
    bottleneck_channels: int = 256
    kernel: int = 3
    scale_factor: int = 1

    def __post_init__(self):
        blocks = tuple(
            b if isinstance(b, DenseBlockConfig) else DenseBlockConfig(**b) for b in self.blocks
        )
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def desk(cls, scale_factor=8):
        return cls(scale_factor=scale_factor)

    def _scaled(self, width, where):
        s = self.scale_factor
        if s < 1:
            raise ConfigurationError(f"scale_factor must be >= 1, got {s}")
        if width % s or width // s < 1:
            raise ConfigurationError(f"{where}: width {width} is not divisible by scale_factor {s}")
        return width // s

    @property
    def lowlevel_width(self):
        return self._scaled(self.lowlevel_channels, "LowLevel")

    @property
    def bottleneck_width(self):
        return self._scaled(self.bottleneck_channels, "Bottleneck")

    def growth_width(self, i):
        return self._scaled(self.blocks[i].growth, f"DenseBlock-{BLOCK_NAMES[i]}")

    def validate(self):
        if len(self.blocks) != 3:
            raise ConfigurationError(f"expected three dense blocks, got {len(self.blocks)}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigurationError(f"LowLevel/Reconstruction: kernel must be odd, got {self.kernel}")
        self.lowlevel_width
        self.bottleneck_width
        for i, block in enumerate(self.blocks):
            name = f"DenseBlock-{BLOCK_NAMES[i]}"
            self.growth_width(i)
            if block.n_layers < 1:
                raise ConfigurationError(f"{name}: needs at least one layer")
            if block.kernel < 1 or block.kernel % 2 == 0:
                raise ConfigurationError(f"{name}: kernel must be odd, got {block.kernel}")
            for j, d in enumerate(block.layer_dilations):
                if d < 1:
                    raise ConfigurationError(f"{name} layer {j + 1}: dilation {d} < 1")
        return self

    def to_dict(self):
        d = asdict(self)
        d["blocks"] = [dict(b, layer_dilations=list(b["layer_dilations"])) for b in d["blocks"]]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["blocks"] = tuple(DenseBlockConfig(**b) for b in d.get("blocks", ()))
        return cls(**d)


class ConvWeights:
    """Kernel, bias and geometry of one convolution layer."""

    def __init__(self, kernel, bias, dilation=1, padding=None):
        self.kernel = kernel
        self.bias = bias
        self.dilation = int(dilation)
        k = kernel.shape[-1]
        self.padding = self.dilation * (k - 1) // 2 if padding is None else int(padding)

    @property
    def in_channels(self):
        return self.kernel.shape[1]

    @property
    def out_channels(self):
        return self.kernel.shape[0]

    @property
    def size(self):
        return self.kernel.shape[-1]

    def __call__(self, x):
        return conv2d(x, self.kernel, self.bias, dilation=self.dilation, padding=self.padding)

    def parameters(self):
        return [self.kernel, self.bias]


def _init_conv(rng, cin, cout, k, dilation, dtype, name):
    bound = np.sqrt(6.0 / (cin * k * k))
    kernel = Tensor(rng.uniform(-bound, bound, (cout, cin, k, k)), requires_grad=True, dtype=dtype, name=f"{name}.kernel")
    bias = Tensor(np.zeros(cout), requires_grad=True, dtype=dtype, name=f"{name}.bias")
    return ConvWeights(kernel, bias, dilation)


def _init_slope(channels, dtype, name):
    return Tensor(np.full(channels, PRELU_INIT), requires_grad=True, dtype=dtype, name=name)


class DenseBlock:
    def __init__(self, in_channels, growth, dilations, kernel, rng, dtype, name):
        self.name = name
        self.in_channels = in_channels
        self.growth = growth
        self.convs = []
        self.slopes = []
        self.concat_slopes = []
        for i, d in enumerate(dilations):
            cin = in_channels if i == 0 else growth * max(i, 1)
            label = f"{name}.layer{i + 1}"
            self.convs.append(_init_conv(rng, cin, growth, kernel, d, dtype, label))
            self.slopes.append(_init_slope(growth, dtype, f"{label}.prelu"))
            if i >= 1:
                self.concat_slopes.append(_init_slope(growth * (i + 1), dtype, f"{name}.concat{i + 1}.prelu"))

    @property
    def out_channels(self):
        return self.growth * len(self.convs)

    def parameters(self):
        params = []
        for i, conv in enumerate(self.convs):
            params += conv.parameters()
            params.append(self.slopes[i])
            if i >= 1:
                params.append(self.concat_slopes[i - 1])
        return params


def dense_block_forward(block, x, trace=None):
    """Run one dense block; optionally append ``(stage, width)`` rows to ``trace``."""
    if x.shape[1] != block.in_channels:
        raise ConfigurationError(
            f"{block.name}: expected {block.in_channels} input channels, got {x.shape[1]}"
        )
    outputs = []
    h = x
    for i, conv in enumerate(block.convs):
        f = prelu(conv(h), block.slopes[i])
        outputs.append(f)
        if trace is not None:
            trace.append((f"{block.name}.layer{i + 1}", f.shape[1]))
        if i == 0:
            h = f
            continue
        h = prelu(concat_channels(outputs), block.concat_slopes[i - 1])
        if trace is not None:
            trace.append((f"{block.name}.concat{i + 1}", h.shape[1]))
    return h


def stacked_receptive_field(layers):
    """Side length of the input window seen by a chain of ``(kernel, dilation)`` layers."""
    return 1 + sum(d * (k - 1) for k, d in layers)


class BDSS:
    """Built network: parameters in graph order plus the static layer graph."""

    def __init__(self, config, lowlevel, lowlevel_slope, blocks, bottleneck, reconstruction):
        self.config = config
        self.lowlevel = lowlevel
        self.lowlevel_slope = lowlevel_slope
        self.blocks = blocks
        self.bottleneck = bottleneck
        self.reconstruction = reconstruction

    def parameters(self):
        params = self.lowlevel.parameters() + [self.lowlevel_slope]
        for block in self.blocks:
            params += block.parameters()
        params += self.bottleneck.parameters() + self.reconstruction.parameters()
        return params

    def named_parameters(self):
        return [(p.name, p) for p in self.parameters()]

    def n_parameters(self):
        return int(sum(p.size for p in self.parameters()))

    @property
    def dtype(self):
        return self.lowlevel.kernel.dtype

    def astype(self, dtype):
        """Copy of the model with every parameter cast to ``dtype``."""
        clone = build_bdss(self.config, seed=0, dtype=dtype)
        for dst, src in zip(clone.parameters(), self.parameters()):
            dst.data = src.data.astype(dtype)
        return clone

    def copy(self):
        return self.astype(self.dtype)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def forward(self, x, trace=None):
        return forward(self, x, trace)

    __call__ = forward

    def receptive_field(self):
        return receptive_field(self)

    def layer_table(self):
        """``(stage, output width)`` rows in Table-style order, from a dry run."""
        return _width_audit(self)


def build_bdss(config=None, seed=0, dtype=np.float32):
    """Construct the network for ``config`` with seeded fan-in uniform weights."""
    config = (config or ModelConfig()).validate()
    rng = substream(seed, STREAM_INIT)
    k = config.kernel
    low = config.lowlevel_width
    lowlevel = _init_conv(rng, 1, low, k, 1, dtype, "lowlevel")
    lowlevel_slope = _init_slope(low, dtype, "lowlevel.prelu")
    blocks = []
    width = low
    for i, bcfg in enumerate(config.blocks):
        name = f"block{BLOCK_NAMES[i]}"
        block = DenseBlock(width, config.growth_width(i), bcfg.layer_dilations, bcfg.kernel, rng, dtype, name)
        blocks.append(block)
        width += block.out_channels
    bottleneck = _init_conv(rng, width, config.bottleneck_width, 1, 1, dtype, "bottleneck")
    reconstruction = _init_conv(rng, config.bottleneck_width, 1, k, 1, dtype, "reconstruction")
    return BDSS(config, lowlevel, lowlevel_slope, blocks, bottleneck, reconstruction)


def _min_extent(model):
    return max(field_of_view(c.size, c.dilation) for block in model.blocks for c in block.convs)


def forward(model, x, trace=None):
    """Despeckled estimate for a ``(B, 1, H, W)`` batch; output has the input's size."""
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x), dtype=model.dtype)
    if x.ndim != 4 or x.shape[1] != 1:
        raise ConfigurationError(f"expected a (B, 1, H, W) batch, got shape {x.shape}")
    span = _min_extent(model)
    if min(x.shape[2:]) < span:
        warnings.warn(
            f"input {x.shape[2]}x{x.shape[3]} is smaller than the widest dilated kernel span "
            f"({span}); zero padding dominates the output",
            stacklevel=2,
        )
    h = prelu(model.lowlevel(x), model.lowlevel_slope)
    if trace is not None:
        trace.append(("LowLevel", h.shape[1]))
    features = h
    for i, block in enumerate(model.blocks):
        out = dense_block_forward(block, features, trace)
        if trace is not None:
            trace.append((f"DenseBlock-{BLOCK_NAMES[i]}", out.shape[1]))
        features = concat_channels([features, out])
        if trace is not None:
            trace.append((f"Concat-{BLOCK_NAMES[i]}", features.shape[1]))
    h = model.bottleneck(features)
    if trace is not None:
        trace.append(("Bottleneck", h.shape[1]))
    h = model.reconstruction(h)
    if trace is not None:
        trace.append(("Reconstruction", h.shape[1]))
    return h


def _width_audit(model):
    # Width bookkeeping from parameter shapes alone (no convolution executed).
    rows = [("LowLevel", model.lowlevel.out_channels)]
    width = model.lowlevel.out_channels
    for i, block in enumerate(model.blocks):
        if block.in_channels != width:
            raise ConfigurationError(f"{block.name}: consumes {block.in_channels}, producer gives {width}")
        for j, conv in enumerate(block.convs):
            expected_in = block.in_channels if j == 0 else block.growth * max(j, 1)
            if conv.in_channels != expected_in:
                raise ConfigurationError(f"{block.name}.layer{j + 1}: consumes {conv.in_channels}, producer gives {expected_in}")
            rows.append((f"{block.name}.layer{j + 1}", conv.out_channels))
            if j >= 1:
                rows.append((f"{block.name}.concat{j + 1}", block.growth * (j + 1)))
        rows.append((f"DenseBlock-{BLOCK_NAMES[i]}", block.out_channels))
        width += block.out_channels
        rows.append((f"Concat-{BLOCK_NAMES[i]}", width))
    if model.bottleneck.in_channels != width:
        raise ConfigurationError(f"Bottleneck: consumes {model.bottleneck.in_channels}, producer gives {width}")
    rows.append(("Bottleneck", model.bottleneck.out_channels))
    rows.append(("Reconstruction", model.reconstruction.out_channels))
    return rows


def receptive_field(model):
    """Side length of the theoretical receptive field of one output pixel."""

    def grow(extent, conv):
        return extent + conv.dilation * (conv.size - 1)

    extent = grow(1, model.lowlevel)
    for block in model.blocks:
        layer_extents = []
        h = extent
        for i, conv in enumerate(block.convs):
            layer_extents.append(grow(h, conv))
            h = max(layer_extents)
        extent = max(extent, max(layer_extents))
    extent = grow(extent, model.bottleneck)
    return grow(extent, model.reconstruction)
