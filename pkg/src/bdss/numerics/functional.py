"""Differentiable image operators: dilated convolution, PReLU, concatenation."""
from __future__ import annotations

import numpy as np

from ..exceptions import ConfigurationError, GeometryError
from .tensor import Tensor, as_tensor


def conv_output_size(size, kernel, dilation=1, padding=0):
    return size + 2 * padding - dilation * (kernel - 1)


def field_of_view(r, l=1):
    """Side length of the square seen by one ``r``-tap kernel dilated by ``l``.

    Equal to ``(r + 1) * l - 1``: a 3-tap kernel covers 3, 7, 11 and 15
    pixels for l = 1..4, and an undilated kernel covers exactly ``r``.
    """
    if r < 1 or r % 2 == 0:
        raise ValueError(f"kernel extent must be a positive odd integer, got {r}")
    if l < 1:
        raise ValueError(f"dilation must be >= 1, got {l}")
    return (r + 1) * l - 1


def _gather_taps(xp, k, dilation, ho, wo):
    b, c = xp.shape[:2]
    cols = np.empty((b, c, k, k, ho, wo), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i * dilation : i * dilation + ho, j * dilation : j * dilation + wo]
    return cols


def _conv_input_grad(g, kernel, dilation, padding, h, w):
    # Correlate the output gradient with the flipped, transposed kernel.
    b, cout, ho, wo = g.shape
    k = kernel.shape[-1]
    reach = dilation * (k - 1)
    full = np.zeros((b, cout, ho + 2 * reach, wo + 2 * reach), dtype=g.dtype)
    full[:, :, reach : reach + ho, reach : reach + wo] = g
    window = full[:, :, padding : padding + h + reach, padding : padding + w + reach]
    cols = _gather_taps(window, k, dilation, h, w).reshape(b, cout * k * k, h * w)
    flipped = kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(kernel.shape[1], cout * k * k)
    return np.matmul(flipped, cols).reshape(b, kernel.shape[1], h, w)


def conv2d(x, weight, bias=None, dilation=1, padding=0):
    """Zero-padded, dilated 2-D cross-correlation.

    Parameters
    ----------
    x : Tensor of shape (B, Cin, H, W)
    weight : Tensor of shape (Cout, Cin, k, k)
    bias : Tensor of shape (Cout,) or None
    dilation : int
        Spacing between kernel taps.
    padding : int
        Zeros added on every border.

    Returns
    -------
    Tensor of shape (B, Cout, H + 2*padding - dilation*(k-1), ...)
    """
    x = as_tensor(x)
    weight = as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ConfigurationError(
            f"conv2d expects 4-D input and kernel, got {x.shape} and {weight.shape}"
        )
    b, cin, h, w = x.shape
    cout, wcin, k, k2 = weight.shape
    if k != k2:
        raise ConfigurationError(f"kernel must be square, got {k}x{k2}")
    if wcin != cin:
        raise ConfigurationError(f"input has {cin} channels but kernel expects {wcin}")
    if dilation < 1 or padding < 0:
        raise ConfigurationError(f"invalid dilation={dilation} / padding={padding}")
    ho = conv_output_size(h, k, dilation, padding)
    wo = conv_output_size(w, k, dilation, padding)
    if h < 1 or w < 1 or ho < 1 or wo < 1:
        raise GeometryError(
            f"{h}x{w} input with k={k}, dilation={dilation}, padding={padding} "
            f"gives empty {ho}x{wo} output"
        )
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ConfigurationError(f"bias shape {bias.shape} does not match {cout} outputs")

    xd = x.data
    dtype = np.result_type(xd, weight.data)
    if padding:
        xp = np.zeros((b, cin, h + 2 * padding, w + 2 * padding), dtype=xd.dtype)
        xp[:, :, padding : padding + h, padding : padding + w] = xd
    else:
        xp = xd
    cols = _gather_taps(xp, k, dilation, ho, wo).reshape(b, cin * k * k, ho * wo)
    w2 = weight.data.reshape(cout, cin * k * k)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(b, cout, ho, wo).astype(dtype, copy=False)

    def backward(g):
        g2 = g.reshape(b, cout, ho * wo)
        gx = gw = gb = None
        if x.requires_grad:
            gx = _conv_input_grad(g, weight.data, dilation, padding, h, w)
        if weight.requires_grad:
            gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward)


def _channel_view(x, slope):
    if x.ndim >= 2:
        channels = x.shape[1]
        shape = (1, channels) + (1,) * (x.ndim - 2)
    else:
        channels = 1
        shape = (1,) * x.ndim
    if slope.size != channels:
        raise ConfigurationError(
            f"PReLU slope has {slope.size} values for {channels} channel(s)"
        )
    return shape


def prelu(x, slope):
    """Parametric ReLU with one learnable slope per channel (axis 1).

    The derivative at exactly zero follows the positive branch.
    """
    x = as_tensor(x)
    slope = as_tensor(slope, x.dtype)
    a = slope.data.reshape(_channel_view(x, slope))
    xd = x.data
    mask = (xd < 0).astype(xd.dtype)
    # scale is exactly ``a`` on negative entries and exactly 1 elsewhere.
    scale = mask * a
    scale += 1 - mask
    out = xd * scale

    def backward(g):
        gx = g * scale if x.requires_grad else None
        ga = None
        if slope.requires_grad:
            negative_part = xd * mask
            if xd.ndim >= 2:
                b, c = xd.shape[:2]
                ga = np.einsum("bcn,bcn->c", g.reshape(b, c, -1), negative_part.reshape(b, c, -1))
            else:
                ga = np.sum(g * negative_part)
            ga = ga.reshape(slope.shape)
        return gx, ga

    return Tensor._from_op(out, (x, slope), backward)


def concat_channels(parts):
    """Concatenate tensors along the channel axis (axis 1) in list order."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ConfigurationError("concat_channels needs at least one tensor")
    if len(parts) == 1:
        return parts[0]
    ref = parts[0].shape
    for p in parts[1:]:
        if p.ndim != len(ref) or p.shape[:1] != ref[:1] or p.shape[2:] != ref[2:]:
            raise ConfigurationError(
                f"cannot concatenate {p.shape} with {ref}: batch/spatial extents differ"
            )
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])
    out = np.concatenate([p.data for p in parts], axis=1)

    def backward(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return Tensor._from_op(out, parts, backward)


def mse(pred, target):
    """Mean squared difference, differentiable in both arguments."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ConfigurationError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def backward(g):
        scaled = (2.0 / n) * g * diff
        return scaled, -scaled

    value = np.asarray(np.mean(diff * diff), dtype=diff.dtype)
    return Tensor._from_op(value, (pred, target), backward)
