"""3-D convolution and max-pooling on :class:`Tensor`.

Both ops accept an unbatched ``[C, T, H, W]`` input or a batched
``[N, C, T, H, W]`` one. Convolution is cross-correlation lowered to a single
matrix product (im2col); spatial axes are never padded, the temporal axis is
zero-padded by ``temporal_pad`` frames on each side.
"""

from __future__ import annotations

import numpy as np

from .tensor import NumericError, ShapeError, Tensor, apply_op

FLOOR = "floor"
CEIL = "ceil"


def conv3d_output_shape(in_thw, kernel_thw, temporal_pad=0, stride=(1, 1, 1)):
    t, h, w = in_thw
    kt, kh, kw = kernel_thw
    st, sh, sw = stride
    return ((t + 2 * temporal_pad - kt) // st + 1, (h - kh) // sh + 1, (w - kw) // sw + 1)


def pool_output_size(n: int, rounding: str) -> int:
    if rounding == FLOOR:
        return n // 2
    if rounding == CEIL:
        return (n + 1) // 2
    raise ValueError(f"unknown rounding mode {rounding!r}")


def _batched(x: Tensor):
    if x.ndim == 4:
        return x.reshape((1,) + x.shape), True
    if x.ndim == 5:
        return x, False
    raise ShapeError(f"expected [C,T,H,W] or [N,C,T,H,W], got {x.shape}")


def conv3d(
    x: Tensor,
    kernels: Tensor,
    bias: Tensor | None = None,
    temporal_pad: int = 0,
    stride=(1, 1, 1),
) -> Tensor:
    """Valid spatial cross-correlation with zero temporal padding.

    Output size per axis is ``T + 2*temporal_pad - kT + 1`` (time) and
    ``H - kH + 1``, ``W - kW + 1`` (space) at unit stride.
    """
    xb, squeeze = _batched(x)
    if kernels.ndim != 5:
        raise ShapeError(f"kernels must be [C_out,C_in,kT,kH,kW], got {kernels.shape}")
    n, c, t, h, w = xb.shape
    o, ci, kt, kh, kw = kernels.shape
    if ci != c:
        raise ShapeError(f"input has {c} channels, kernels expect {ci}")
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"bias shape {bias.shape} does not match {o} output channels")
    if kh > h or kw > w or kt > t + 2 * temporal_pad:
        raise ShapeError(f"kernel {(kt, kh, kw)} larger than padded input {(t + 2 * temporal_pad, h, w)}")
    if not np.isfinite(xb.data).all():
        raise NumericError("conv3d: non-finite input")
    st, sh, sw = stride
    to, ho, wo = conv3d_output_shape((t, h, w), (kt, kh, kw), temporal_pad, stride)

    xp = xb.data
    if temporal_pad:
        xp = np.pad(xp, ((0, 0), (0, 0), (temporal_pad, temporal_pad), (0, 0), (0, 0)))
    offsets = [(a, b, d) for a in range(kt) for b in range(kh) for d in range(kw)]

    def window(a, b, d):
        return (slice(None), slice(None), slice(a, a + st * to, st), slice(b, b + sh * ho, sh), slice(d, d + sw * wo, sw))

    # im2col with rows ordered (kt, kh, kw, C) and columns (N, To, Ho, Wo)
    cols = np.empty((kt, kh, kw, c, n, to, ho, wo), dtype=xp.dtype)
    for a, b, d in offsets:
        cols[a, b, d] = xp[window(a, b, d)].transpose(1, 0, 2, 3, 4)
    cols = cols.reshape(kt * kh * kw * c, -1)
    wmat = kernels.data.transpose(0, 2, 3, 4, 1).reshape(o, -1)
    y = wmat @ cols
    if bias is not None:
        y += bias.data[:, None]
    out = np.ascontiguousarray(y.reshape(o, n, to, ho, wo).transpose(1, 0, 2, 3, 4))
    if squeeze:
        out = out[0]

    parents = (x, kernels) if bias is None else (x, kernels, bias)

    def bw(g):
        g = g.reshape(n, o, to, ho, wo)
        gom = np.ascontiguousarray(g.transpose(1, 0, 2, 3, 4)).reshape(o, -1)
        gw = None
        if kernels.requires_grad:
            gw = (gom @ cols.T).reshape(o, kt, kh, kw, c).transpose(0, 4, 1, 2, 3)
        gx = None
        if x.requires_grad:
            dcols = (wmat.T @ gom).reshape(kt, kh, kw, c, n, to, ho, wo)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for a, b, d in offsets:
                gxp[window(a, b, d)] += dcols[a, b, d].transpose(1, 0, 2, 3, 4)
            gx = gxp[:, :, temporal_pad : temporal_pad + t].reshape(x.shape)
        if bias is None:
            return gx, gw
        return gx, gw, gom.sum(axis=1)

    return apply_op(out, parents, bw, "conv3d")


def maxpool3d(x: Tensor, rounding=(FLOOR, FLOOR, FLOOR)) -> Tensor:
    """2x2x2 max-pool with stride 2 over (T, H, W).

    ``rounding`` picks floor or ceil per axis; ceil zero-pads one trailing
    cell on odd axes. Backward routes each window's gradient to the first
    maximal cell in ascending (t, h, w) scan order.
    """
    if isinstance(rounding, str):
        rounding = (rounding,) * 3
    xb, squeeze = _batched(x)
    n, c, t, h, w = xb.shape
    if 0 in (t, h, w):
        raise ShapeError(f"cannot pool an empty axis: {x.shape}")
    outs = tuple(pool_output_size(s, r) for s, r in zip((t, h, w), rounding))
    if 0 in outs:
        raise ShapeError(f"pooling {(t, h, w)} with {rounding} yields an empty axis")
    to, ho, wo = outs

    data = xb.data
    pads = [(0, 0), (0, 0)]
    crops = [slice(None), slice(None)]
    for size, osize in zip((t, h, w), outs):
        pads.append((0, max(0, 2 * osize - size)))
        crops.append(slice(0, min(size, 2 * osize)))
    data = data[tuple(crops)]
    if any(p[1] for p in pads):
        data = np.pad(data, pads)
    # window cells in ascending (t, h, w) scan order
    cells = [
        (slice(None), slice(None), slice(a, None, 2), slice(b, None, 2), slice(d, None, 2))
        for a in range(2)
        for b in range(2)
        for d in range(2)
    ]
    out = data[cells[0]].copy()
    for cell in cells[1:]:
        np.maximum(out, data[cell], out=out)

    def bw(g):
        g = g.reshape(n, c, to, ho, wo)
        gfull = np.zeros(data.shape, dtype=g.dtype)
        unclaimed = np.ones(out.shape, dtype=bool)
        for cell in cells:
            hit = unclaimed & (data[cell] == out)
            gfull[cell] = np.where(hit, g, 0)
            unclaimed &= ~hit
        full = np.zeros((n, c, t, h, w), dtype=g.dtype)
        kt, kh, kw = (min(s, 2 * o) for s, o in zip((t, h, w), outs))
        full[:, :, :kt, :kh, :kw] = gfull[:, :, :kt, :kh, :kw]
        return (full.reshape(x.shape),)

    return apply_op(out[0] if squeeze else out, (x,), bw, "maxpool3d")
