"""Differentiable primitives built on the Tensor engine.

Layout conventions follow the rest of the package: feature maps are
channel-first [C, H, W]; sampling points are (x, y) with x along the
width axis.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

_node = Tensor._node


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map along the last axis: x [..., in] @ weight [in, out] + bias."""
    n_in, n_out = weight.shape
    if x.shape[-1] != n_in:
        raise ValueError(f"linear: trailing dim {x.shape[-1]} != {n_in}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, n_in)
    out = x2 @ weight.data
    if bias is not None:
        out = out + bias.data
    out = out.reshape(*lead, n_out)

    def vjp(g):
        g2 = g.reshape(-1, n_out)
        gx = (g2 @ weight.data.T).reshape(x.data.shape)
        gw = x2.T @ g2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(out, parents, vjp)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, 0)

    def vjp(g):
        return (np.where(mask, g, 0),)

    return _node(out, (x,), vjp)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (x,), vjp)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _node(out, (x,), vjp)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xn = xc * inv
    out = xn * gain.data + bias.data

    def vjp(g):
        dxn = g * gain.data
        gx = inv / d * (d * dxn - dxn.sum(axis=-1, keepdims=True)
                        - xn * (dxn * xn).sum(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xn).sum(axis=lead), g.sum(axis=lead)

    return _node(out, (x, gain, bias), vjp)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None = None,
            mask: np.ndarray | None = None) -> Tensor:
    """Inverted dropout. Callers skip this entirely in eval mode.

    Passing an explicit mask (values 0 or 1/(1-p)) makes the op pure for
    finite-difference checks.
    """
    if mask is None:
        if rng is None:
            raise ValueError("dropout needs an rng or an explicit mask")
        keep = rng.random(x.shape) >= p
        mask = keep.astype(x.dtype) / np.asarray(1.0 - p, dtype=x.dtype)
    mask = mask.astype(x.dtype, copy=False)
    out = x.data * mask

    def vjp(g):
        return (g * mask,)

    return _node(out, (x,), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        slicer = [slice(None)] * g.ndim
        pieces = []
        for i in range(len(tensors)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            pieces.append(g[tuple(slicer)])
        return tuple(pieces)

    return _node(out, tuple(tensors), vjp)


def conv3x3(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """3x3 cross-correlation, stride 1, zero padding 1, on [C, H, W]."""
    c_in, h, w = x.shape
    c_out, c_in_w, kh, kw = weight.shape
    if (c_in_w, kh, kw) != (c_in, 3, 3):
        raise ValueError(f"conv3x3: weight {weight.shape} incompatible with input {x.shape}")

    xp = np.zeros((c_in, h + 2, w + 2), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    # [c_in, h, w, 3, 3] -> [h*w, c_in*9]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(h * w, c_in * 9)
    wmat = weight.data.reshape(c_out, c_in * 9)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = out.transpose(1, 0).reshape(c_out, h, w)

    def vjp(g):
        g2 = g.reshape(c_out, h * w).T  # [h*w, c_out]
        gw = (g2.T @ cols).reshape(weight.shape)
        gcols = g2 @ wmat  # [h*w, c_in*9]
        gc = gcols.reshape(h, w, c_in, 3, 3)
        gxp = np.zeros_like(xp)
        for di in range(3):
            for dj in range(3):
                gxp[:, di:di + h, dj:dj + w] += gc[:, :, :, di, dj].transpose(2, 0, 1)
        gx = gxp[:, 1:-1, 1:-1]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(1, 2))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(out, parents, vjp)


def avg_pool2x2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2 on [C, H, W]; H, W must be even."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError("avg_pool2x2 requires even spatial dims")
    r = x.data.reshape(c, h // 2, 2, w // 2, 2)
    out = r.mean(axis=(2, 4))

    def vjp(g):
        gx = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * np.asarray(0.25, dtype=x.dtype)
        return (gx,)

    return _node(out, (x,), vjp)


_UP_CACHE: dict = {}


def _up_matrix(n: int, dtype) -> np.ndarray:
    """Half-pixel 2x bilinear upsampling as a dense (2n, n) matrix."""
    key = (n, np.dtype(dtype).name)
    if key not in _UP_CACHE:
        U = np.zeros((2 * n, n), dtype=dtype)
        for i in range(n):
            U[2 * i, i] += 0.75
            U[2 * i, max(i - 1, 0)] += 0.25
            U[2 * i + 1, i] += 0.75
            U[2 * i + 1, min(i + 1, n - 1)] += 0.25
        _UP_CACHE[key] = U
    return _UP_CACHE[key]


def upsample2x(x: Tensor) -> Tensor:
    """2x bilinear upsampling (half-pixel, edge-clamped) on [C, H, W]."""
    c, h, w = x.shape
    A = _up_matrix(h, x.dtype)
    B = _up_matrix(w, x.dtype)
    out = (A @ x.data) @ B.T

    def vjp(g):
        return ((A.T @ g) @ B,)

    return _node(out, (x,), vjp)


def bilinear_sample(feature: Tensor, pts) -> Tensor:
    """Sample [C, H, W] at continuous (x, y) points, zero outside the grid.

    pts is [N, 2]; passing a Tensor makes the output differentiable with
    respect to the sampling coordinates as well as the feature map.
    """
    c, h, w = feature.shape
    pts_tensor = isinstance(pts, Tensor)
    p = pts.data if pts_tensor else np.asarray(pts)
    work = np.result_type(feature.dtype, p.dtype)
    x = p[:, 0]
    y = p[:, 1]
    x0 = np.floor(x)
    y0 = np.floor(y)
    wx = (x - x0).astype(work)
    wy = (y - y0).astype(work)
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    corners = []
    for dx, dy, cw in (
        (0, 0, (1 - wx) * (1 - wy)),
        (1, 0, wx * (1 - wy)),
        (0, 1, (1 - wx) * wy),
        (1, 1, wx * wy),
    ):
        cx = x0 + dx
        cy = y0 + dy
        inb = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        cxc = np.clip(cx, 0, w - 1)
        cyc = np.clip(cy, 0, h - 1)
        vals = feature.data[:, cyc, cxc] * inb.astype(work)  # [C, N]
        corners.append((cx, cy, inb, cw, vals))

    out = np.zeros((len(x), c), dtype=work)
    for _, _, _, cw, vals in corners:
        out += (vals * cw).T

    def vjp(g):
        gt = g.T  # [C, N]
        gf = np.zeros_like(feature.data)
        for cx, cy, inb, cw, _ in corners:
            contrib = gt[:, inb] * cw[inb]
            np.add.at(gf, (slice(None), cy[inb], cx[inb]), contrib)
        if not pts_tensor:
            return (gf,)
        v00, v10, v01, v11 = (corner[4] for corner in corners)
        dvdx = (1 - wy) * (v10 - v00) + wy * (v11 - v01)  # [C, N]
        dvdy = (1 - wx) * (v01 - v00) + wx * (v11 - v10)
        gx = (gt * dvdx).sum(axis=0)
        gy = (gt * dvdy).sum(axis=0)
        gp = np.stack([gx, gy], axis=-1).astype(p.dtype)
        return gf, gp

    parents = (feature, pts) if pts_tensor else (feature,)
    return _node(out, parents, vjp)
